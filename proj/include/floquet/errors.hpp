#pragma once

#include <stdexcept>
#include <string>

namespace floquet {

/// Broad error categories. The CLI maps each onto a process exit code.
enum class ErrorKind { Config, Numeric, Hypothesis, Resource };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable identifier, e.g. "degenerate_lattice".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error config_error(std::string code, const std::string& what) {
  return Error(ErrorKind::Config, std::move(code), what);
}
inline Error numeric_error(std::string code, const std::string& what) {
  return Error(ErrorKind::Numeric, std::move(code), what);
}
inline Error hypothesis_error(std::string code, const std::string& what) {
  return Error(ErrorKind::Hypothesis, std::move(code), what);
}
inline Error resource_error(std::string code, const std::string& what) {
  return Error(ErrorKind::Resource, std::move(code), what);
}

}  // namespace floquet

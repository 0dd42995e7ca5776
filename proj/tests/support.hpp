#pragma once

#include <memory>

#include "floquet/bloch.hpp"

namespace floquet::testing {

inline RVec vec(double x) {
  RVec v(1);
  v << x;
  return v;
}

inline RVec vec(double x, double y) {
  RVec v(2);
  v << x, y;
  return v;
}

inline Lattice unit_line() { return make_lattice({{1.0}}); }

/// V(x) = 2 cos(2 pi x) on the unit line.
inline CosineSumPotential cosine_potential() {
  CosineSumPotential v;
  v.terms = {{Miller{{1, 0}}, 1.0}};
  return v;
}

inline std::shared_ptr<const Crystal> cosine_crystal(double cutoff = 4.5 * kTwoPi) {
  return std::make_shared<const Crystal>(Crystal::build(unit_line(), cosine_potential(), cutoff));
}

inline std::shared_ptr<const Crystal> free_crystal(double cutoff = 4.5 * kTwoPi) {
  return std::make_shared<const Crystal>(Crystal::build(unit_line(), ZeroPotential{}, cutoff));
}

}  // namespace floquet::testing

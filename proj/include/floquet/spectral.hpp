#pragma once

// Arc projectors of unitary monodromies and the fiberwise spectral measure
// acting on discretized direct-integral states.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/evolve.hpp"
#include "floquet/linalg.hpp"
#include "floquet/parallel.hpp"

namespace floquet {

/// The open arc {e^{-iy} : y in (lo, hi)}. If lo > hi the arc wraps through
/// pi; lo == hi is the full circle minus the single point e^{-i lo}.
struct Arc {
  double lo = -kPi;
  double hi = kPi;

  static Arc symmetric(double g) { return {-g, g}; }
  static Arc full(double missing = kPi) { return {missing, missing}; }
  /// S^1 minus the closed arc [lo, hi].
  Arc complement() const { return {hi, lo}; }

  double length() const {
    double l = std::fmod(hi - lo, kTwoPi);
    if (l <= 0.0) l += kTwoPi;
    return l;
  }
  double midpoint() const { return wrap_angle(lo + 0.5 * length()); }
  /// Distance from lo going counterclockwise in y, in [0, 2pi).
  double offset(double theta) const {
    double o = std::fmod(theta - lo, kTwoPi);
    if (o < 0.0) o += kTwoPi;
    return o;
  }
};

/// Membership of exponents in an arc. Exponents within `boundary_tol` of an
/// endpoint are counted as inside, and a warning is recorded.
inline std::vector<bool> arc_membership(const RVec& exponents, const Arc& arc, std::vector<std::string>* warnings = nullptr,
                                        double boundary_tol = 1e-12) {
  const double len = arc.length();
  std::vector<bool> in(static_cast<std::size_t>(exponents.size()));
  for (Eigen::Index j = 0; j < exponents.size(); ++j) {
    const double o = arc.offset(exponents(j));
    const bool near_lo = o < boundary_tol || o > kTwoPi - boundary_tol;
    const bool near_hi = std::abs(o - len) < boundary_tol;
    if ((near_lo || near_hi) && warnings)
      warnings->push_back("exponent " + std::to_string(exponents(j)) + " lies on an arc endpoint; counted inside");
    in[static_cast<std::size_t>(j)] = near_lo || near_hi || (o > 0.0 && o < len);
  }
  return in;
}

/// P = sum over exponents in the arc of v_j v_j^*.
inline CMat arc_projector(const Monodromy& m, const Arc& arc, std::vector<std::string>* warnings = nullptr) {
  const auto in = arc_membership(m.exponents, arc, warnings);
  const auto n = m.vectors.rows();
  CMat p = CMat::Zero(n, n);
  for (Eigen::Index j = 0; j < m.vectors.cols(); ++j)
    if (in[static_cast<std::size_t>(j)]) p.noalias() += m.vectors.col(j) * m.vectors.col(j).adjoint();
  return p;
}

/// sum_j z_j v_j v_j^*; equals the monodromy for a unitary decomposition.
inline CMat spectral_reconstruction(const Monodromy& m) {
  return m.vectors * m.multipliers.asDiagonal() * m.vectors.adjoint();
}

/// Precomputed fibers of a crystal over a Brillouin grid. States refer to it
/// by shared pointer, so several states and monodromy sets share one copy.
struct FiberBank {
  std::shared_ptr<const Crystal> crystal;
  BrillouinGrid grid;
  std::vector<FiberSystem> fibers;

  std::size_t size() const { return fibers.size(); }
  std::size_t bands() const { return fibers.empty() ? 0 : fibers.front().size(); }
};

inline std::shared_ptr<const FiberBank> make_fiber_bank(std::shared_ptr<const Crystal> crystal, BrillouinGrid grid,
                                                        int threads = 1) {
  auto bank = std::make_shared<FiberBank>();
  bank->crystal = std::move(crystal);
  bank->grid = std::move(grid);
  bank->fibers.resize(bank->grid.size());
  parallel_for(bank->grid.size(), threads,
               [&](std::size_t j) { bank->fibers[j] = assemble_fiber(*bank->crystal, bank->grid.points[j]); });
  return bank;
}

/// A state on the discrete direct integral: per fiber, coefficients in the
/// eigenbasis of H(k) (all resolved bands, ascending energy).
struct StateFiberRep {
  std::shared_ptr<const FiberBank> bank;
  std::vector<CVec> coeffs;

  static StateFiberRep zero(std::shared_ptr<const FiberBank> bank) {
    StateFiberRep s;
    s.coeffs.assign(bank->size(), CVec::Zero(static_cast<Eigen::Index>(bank->bands())));
    s.bank = std::move(bank);
    return s;
  }

  cplx inner(const StateFiberRep& o) const {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) acc += bank->grid.weights[j] * coeffs[j].dot(o.coeffs[j]);
    return acc;
  }
  double squared_norm() const {
    double acc = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) acc += bank->grid.weights[j] * coeffs[j].squaredNorm();
    return acc;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  StateFiberRep& operator+=(const StateFiberRep& o) {
    for (std::size_t j = 0; j < coeffs.size(); ++j) coeffs[j] += o.coeffs[j];
    return *this;
  }
  StateFiberRep& operator-=(const StateFiberRep& o) {
    for (std::size_t j = 0; j < coeffs.size(); ++j) coeffs[j] -= o.coeffs[j];
    return *this;
  }
  StateFiberRep& operator*=(cplx s) {
    for (auto& c : coeffs) c *= s;
    return *this;
  }
  friend StateFiberRep operator+(StateFiberRep a, const StateFiberRep& b) { return a += b; }
  friend StateFiberRep operator-(StateFiberRep a, const StateFiberRep& b) { return a -= b; }
  friend StateFiberRep operator*(cplx s, StateFiberRep a) { return a *= s; }

  /// Plane-wave coefficients of the periodic part at fiber j.
  CVec plane_wave(std::size_t j) const { return bank->fibers[j].vectors * coeffs[j]; }
  void set_plane_wave(std::size_t j, const CVec& x) { coeffs[j] = bank->fibers[j].vectors.adjoint() * x; }
};

inline void require_same_grid(const StateFiberRep& state, const std::vector<Monodromy>& monos) {
  if (monos.size() != state.coeffs.size()) throw config_error("grid_mismatch", "state and monodromy grids differ in size");
  for (std::size_t j = 0; j < monos.size(); ++j)
    if ((monos[j].k - state.bank->grid.points[j]).norm() > 1e-12)
      throw config_error("grid_mismatch", "state and monodromy grids differ at fiber " + std::to_string(j));
}

/// Monodromies on every fiber of a bank.
inline std::vector<Monodromy> fiber_monodromies(const FiberBank& bank, const DrivingProfile& drive, double eps,
                                                int n_steps, const EvolutionOptions& opt = {}, int threads = 1) {
  std::vector<Monodromy> out(bank.size());
  parallel_for(bank.size(), threads, [&](std::size_t j) {
    out[j] = monodromy(*bank.crystal, bank.fibers[j], drive, eps, n_steps, opt);
  });
  return out;
}

/// Fiberwise action of the spectral measure of the arc.
inline StateFiberRep apply_measure(const StateFiberRep& state, const Arc& arc, const std::vector<Monodromy>& monos,
                                   std::vector<std::string>* warnings = nullptr) {
  require_same_grid(state, monos);
  StateFiberRep out = state;
  for (std::size_t j = 0; j < monos.size(); ++j) {
    const auto in = arc_membership(monos[j].exponents, arc, warnings);
    CVec y = monos[j].vectors.adjoint() * state.plane_wave(j);
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (!in[static_cast<std::size_t>(i)]) y(i) = 0.0;
    out.set_plane_wave(j, monos[j].vectors * y);
  }
  return out;
}

struct CenteringResidual {
  double eta = 0.0;
  double bound = 0.0;
};

/// u is first projected into the arc; then eta = M u - e^{-i nu0} u with nu0
/// the arc midpoint, against the bound 2 sin(|I|/4) |u|.
inline CenteringResidual centering_residual(const Monodromy& m, const Arc& arc, const CVec& u) {
  const CVec pu = arc_projector(m, arc) * u;
  const CVec eta = m.matrix * pu - std::exp(-kI * arc.midpoint()) * pu;
  return {eta.norm(), 2.0 * std::sin(arc.length() / 4.0) * pu.norm()};
}

}  // namespace floquet

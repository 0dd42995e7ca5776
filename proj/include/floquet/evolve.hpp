#pragma once

// Driven fiber dynamics and monodromy operators.
//
// On the fiber k the driven Hamiltonian H^0 + 2i eps^a A(eps^a t).grad acts on
// e^{i(k+G).x} as H(k) - 2 eps^a A(eps^a t).(k+G) on the diagonal. The
// spatially constant eps^{2a}|A|^2 of the magnetic form is a pure global
// phase and is left out. All generators are shifted by -E* so that the target
// energy sits at quasi-energy zero.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/drive.hpp"
#include "floquet/linalg.hpp"

namespace floquet {

struct EvolutionOptions {
  /// E*, subtracted from H(k).
  double energy_shift = 0.0;
  /// Use -(H(k) - E*) + drive instead of +(H(k) - E*) + drive.
  bool negate_static_part = false;
};

/// Time-dependent generator on one fiber. Immutable; cheap to evaluate.
class FiberGenerator {
 public:
  FiberGenerator(const Crystal& crystal, const FiberSystem& fiber, const DrivingProfile& drive, double eps,
                 EvolutionOptions opt = {})
      : drive_(drive), eps_(eps), opt_(opt) {
    if (!(eps > 0.0)) throw config_error("bad_epsilon", "epsilon must be positive");
    if (drive.dimension() != crystal.dimension())
      throw config_error("bad_dimension", "drive and lattice dimensions differ");
    const auto n = fiber.hamiltonian.rows();
    base_ = fiber.hamiltonian - opt.energy_shift * CMat::Identity(n, n);
    if (opt.negate_static_part) base_ = -base_;
    for (int d = 0; d < crystal.dimension(); ++d) {
      RVec e = RVec::Zero(crystal.dimension());
      e(d) = 1.0;
      momentum_.push_back(crystal.momentum_along(fiber.k, e));
    }
    scale_ = std::pow(eps, drive.exponent());
  }

  /// Slow-time stretch eps^a.
  double scale() const { return scale_; }
  /// Drive period in fast time, T_per eps^{-a}.
  double period() const { return drive_.period() / scale_; }
  const CMat& static_part() const { return base_; }
  bool autonomous() const { return drive_.is_zero(); }

  CMat operator()(double t) const {
    CMat h = base_;
    if (drive_.is_zero()) return h;
    const RVec a = drive_.eval(scale_ * t);
    for (std::size_t d = 0; d < momentum_.size(); ++d)
      h.diagonal() += (-2.0 * scale_ * a(static_cast<Eigen::Index>(d))) * momentum_[d].cast<cplx>();
    return h;
  }

 private:
  const DrivingProfile& drive_;
  double eps_;
  EvolutionOptions opt_;
  CMat base_;
  std::vector<RVec> momentum_;
  double scale_ = 1.0;
};

inline CMat fiber_generator(const Crystal& crystal, const FiberSystem& fiber, const DrivingProfile& drive, double eps,
                            double t, const EvolutionOptions& opt = {}) {
  return FiberGenerator(crystal, fiber, drive, eps, opt)(t);
}

/// Exponential midpoint rule: U <- exp(-i H(t_mid) dt) U, n_steps uniform steps.
inline CMat propagate(const FiberGenerator& gen, double t0, double t1, int n_steps) {
  if (n_steps < 1) throw config_error("bad_steps", "n_steps must be >= 1");
  if (gen.autonomous()) return unitary_step(gen.static_part(), t1 - t0);
  const double dt = (t1 - t0) / n_steps;
  const auto n = gen.static_part().rows();
  CMat u = CMat::Identity(n, n);
  for (int s = 0; s < n_steps; ++s) {
    u = unitary_step(gen(t0 + (s + 0.5) * dt), dt) * u;
    // rounding drift grows linearly in the step count
    if ((s + 1) % 1024 == 0) u = nearest_unitary(u);
  }
  return nearest_unitary(u);
}

inline CMat propagate(const Crystal& crystal, const FiberSystem& fiber, const DrivingProfile& drive, double eps,
                      double t0, double t1, int n_steps, const EvolutionOptions& opt = {}) {
  return propagate(FiberGenerator(crystal, fiber, drive, eps, opt), t0, t1, n_steps);
}

/// Propagates a single state vector through the checkpoints `times`
/// (ascending, starting at or after 0) with step size at most `max_dt`;
/// returns the state at each checkpoint. Steps never straddle checkpoints.
inline std::vector<CVec> propagate_state(const FiberGenerator& gen, CVec psi, const std::vector<double>& times,
                                         double max_dt) {
  std::vector<CVec> out;
  out.reserve(times.size());
  double t = 0.0;
  for (double target : times) {
    const double span = target - t;
    if (span > 0.0) {
      const int steps = std::max(1, static_cast<int>(std::ceil(span / max_dt - 1e-12)));
      psi = propagate(gen, t, target, steps) * psi;
    }
    t = target;
    out.push_back(psi);
  }
  return out;
}

/// One-period flow map and its unit-circle eigendecomposition. Multipliers are
/// z_j = exp(-i theta_j), theta_j in (-pi, pi], sorted ascending.
struct Monodromy {
  RVec k;
  CMat matrix;
  CVec multipliers;
  CMat vectors;
  RVec exponents;
  double period = 0.0;  // T_per eps^{-a}
  std::vector<std::string> warnings;

  /// nu_j = theta_j / T_per^eps, the quasi-energies.
  RVec quasi_energies() const { return exponents / period; }
  std::size_t size() const { return static_cast<std::size_t>(exponents.size()); }
};

/// Eigendecomposition of a unitary matrix via the complex Schur form, which is
/// diagonal for normal matrices; the Schur vectors are then orthonormal
/// eigenvectors. Exponents are sorted ascending; exact ties are ordered by the
/// first differing eigenvector component.
inline void decompose_unitary(Monodromy& m) {
  Eigen::ComplexSchur<CMat> schur(m.matrix);
  if (schur.info() != Eigen::Success) throw numeric_error("eigensolver_failure", "complex Schur did not converge");
  const CMat& t = schur.matrixT();
  const CMat& u = schur.matrixU();
  const auto n = t.rows();
  double off = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) off += std::norm(t(i, j));
  if (std::sqrt(off) > 1e-8 * std::sqrt(static_cast<double>(n)))
    m.warnings.push_back("Schur form of the monodromy is not diagonal; matrix is not normal to 1e-8");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  RVec theta(n);
  CMat vecs = u;
  for (Eigen::Index j = 0; j < n; ++j) {
    theta(j) = wrap_angle(-std::arg(t(j, j)));
    fix_phase(vecs.col(j));
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (theta(a) != theta(b)) return theta(a) < theta(b);
    for (Eigen::Index i = 0; i < n; ++i) {
      const cplx x = vecs(i, a), y = vecs(i, b);
      if (x.real() != y.real()) return x.real() < y.real();
      if (x.imag() != y.imag()) return x.imag() < y.imag();
    }
    return false;
  });
  m.multipliers.resize(n);
  m.exponents.resize(n);
  m.vectors.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    m.exponents(j) = theta(src);
    m.multipliers(j) = t(src, src) / std::abs(t(src, src));
    m.vectors.col(j) = vecs.col(src);
  }
}

inline Monodromy monodromy(const FiberGenerator& gen, const RVec& k, int n_steps) {
  Monodromy m;
  m.k = k;
  m.period = gen.period();
  if (!gen.autonomous() && n_steps < 64)
    m.warnings.push_back("fewer than 64 steps per drive period (" + std::to_string(n_steps) + ")");
  m.matrix = propagate(gen, 0.0, m.period, n_steps);
  decompose_unitary(m);
  return m;
}

inline Monodromy monodromy(const Crystal& crystal, const FiberSystem& fiber, const DrivingProfile& drive, double eps,
                           int n_steps, const EvolutionOptions& opt = {}) {
  return monodromy(FiberGenerator(crystal, fiber, drive, eps, opt), fiber.k, n_steps);
}

}  // namespace floquet

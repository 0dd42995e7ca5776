#pragma once

// Effective envelope models, their Floquet multipliers, spectral enclosures
// on BL_eps, and validation against the full fiber dynamics.
//
// Kinetic momentum is P = xi - A(T). This matches the fiber generator
// H(k) - 2 eps^a A.(k+G) = H(k - eps^a A) - eps^{2a}|A|^2 used in evolve, so
// the transport generator is grad E . P = -c . P with c = -grad E.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/drive.hpp"
#include "floquet/evolve.hpp"
#include "floquet/linalg.hpp"
#include "floquet/parallel.hpp"
#include "floquet/wavepacket.hpp"

namespace floquet {

struct TransportModel {
  RVec c;  // -grad E_{b*}(k*)
};

/// sum_d P_d M_d; the default M_d = v_D sigma_d gives v_D sigma . P.
struct DiracModel {
  double v_D = 1.0;
  std::array<CMat, 2> couplings;
};

struct SchrodingerModel {
  RMat half_hessian;  // (1/2) D^2 E
};

/// alpha |P|^2 s0 + gamma_tilde (P1^2 - P2^2) s2 + 2 beta P1 P2 s1.
struct MatrixSchrodingerModel {
  double alpha = 0.0;
  double gamma_tilde = 0.0;
  double beta = 0.0;
};

using ModelVariant = std::variant<TransportModel, DiracModel, SchrodingerModel, MatrixSchrodingerModel>;

struct EffectiveModel {
  ModelVariant model;
  int exponent = 1;  // a

  int dimension() const {
    return std::visit(
        [](const auto& m) -> int {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, TransportModel>) return static_cast<int>(m.c.size());
          else if constexpr (std::is_same_v<M, SchrodingerModel>) return static_cast<int>(m.half_hessian.rows());
          else return 2;
        },
        model);
  }
  std::size_t multiplicity() const {
    return std::holds_alternative<DiracModel>(model) || std::holds_alternative<MatrixSchrodingerModel>(model) ? 2 : 1;
  }
  const char* name() const {
    switch (model.index()) {
      case 0: return "transport";
      case 1: return "dirac";
      case 2: return "schrodinger";
      default: return "matrix_schrodinger";
    }
  }
};

inline CMat pauli(int i) {
  CMat s = CMat::Zero(2, 2);
  if (i == 0) s << 1, 0, 0, 1;
  else if (i == 1) s << 0, 1, 1, 0;
  else if (i == 2) s << 0, -kI, kI, 0;
  else s << 1, 0, 0, -1;
  return s;
}

inline EffectiveModel transport_model(const RVec& c) {
  if (!(c.norm() > 0.0)) throw config_error("zero_velocity", "transport model needs c != 0");
  return {TransportModel{c}, 1};
}

inline EffectiveModel dirac_model(double v_D) {
  if (!(v_D > 0.0)) throw config_error("bad_dirac_velocity", "v_D must be positive");
  return {DiracModel{v_D, {v_D * pauli(1), v_D * pauli(2)}}, 1};
}

/// Couplings M_d = p*^* diag(2 (k*+G)_d) p* in the basis of the two modes at
/// k*, i.e. the first-order k.p Hamiltonian. v_D is carried for reporting.
inline EffectiveModel dirac_model_from_modes(const Crystal& crystal, const BandTarget& target, double v_D) {
  if (crystal.dimension() != 2 || target.multiplicity != 2)
    throw config_error("bad_dirac_target", "a Dirac model needs a 2D lattice and a doublet");
  DiracModel m{v_D, {}};
  for (int d = 0; d < 2; ++d) {
    RVec e = RVec::Zero(2);
    e(d) = 1.0;
    const RVec mom = crystal.momentum_along(target.k_star, e);
    CMat md = target.modes.adjoint() * (2.0 * mom).cast<cplx>().asDiagonal() * target.modes;
    m.couplings[static_cast<std::size_t>(d)] = 0.5 * (md + md.adjoint());
  }
  return {m, 1};
}

inline EffectiveModel schrodinger_model(const RMat& half_hessian) {
  if (half_hessian.rows() != half_hessian.cols()) throw config_error("bad_hessian", "Hessian must be square");
  return {SchrodingerModel{0.5 * (half_hessian + half_hessian.transpose())}, 2};
}

inline EffectiveModel matrix_schrodinger_model(double alpha, double gamma_tilde, double beta) {
  return {MatrixSchrodingerModel{alpha, gamma_tilde, beta}, 2};
}

namespace detail {

/// exp(-i H dt) for a 2x2 Hermitian H = h0 I + n . sigma.
inline CMat expm_hermitian2(const CMat& h, double dt) {
  const double h0 = 0.5 * (h(0, 0) + h(1, 1)).real();
  const double nx = h(1, 0).real(), ny = h(1, 0).imag(), nz = 0.5 * (h(0, 0) - h(1, 1)).real();
  const double r = std::sqrt(nx * nx + ny * ny + nz * nz);
  CMat out = std::cos(r * dt) * CMat::Identity(2, 2);
  if (r > 0.0) out -= (kI * (std::sin(r * dt) / r)) * (nx * pauli(1) + ny * pauli(2) + nz * pauli(3));
  return out * std::exp(-kI * (h0 * dt));
}

inline RVec kinetic(const RVec& xi, const DrivingProfile& drive, double t) { return xi - drive.eval(t); }

/// Fourth-order commutator-free Magnus integration of a 2x2 generator over
/// [0, T]: two exponentials per step built from the Gauss-Legendre samples.
template <class Gen>
CMat integrate2(const Gen& gen, double t_end, int n_steps) {
  if (n_steps < 1) throw config_error("bad_steps", "n_steps must be >= 1");
  const double dt = t_end / n_steps;
  const double r3 = std::sqrt(3.0);
  const double c1 = 0.5 - r3 / 6.0, c2 = 0.5 + r3 / 6.0;
  const double a1 = 0.25 + r3 / 6.0, a2 = 0.25 - r3 / 6.0;
  CMat u = CMat::Identity(2, 2);
  for (int s = 0; s < n_steps; ++s) {
    const CMat h1 = gen((s + c1) * dt), h2 = gen((s + c2) * dt);
    u = expm_hermitian2(a1 * h2 + a2 * h1, dt) * expm_hermitian2(a1 * h1 + a2 * h2, dt) * u;
    if ((s + 1) % 1024 == 0) u = nearest_unitary(u);
  }
  return nearest_unitary(u);
}

inline CMat matrix_schrodinger_traceless(const MatrixSchrodingerModel& m, const RVec& p) {
  return m.gamma_tilde * (p(0) * p(0) - p(1) * p(1)) * pauli(2) + 2.0 * m.beta * p(0) * p(1) * pauli(1);
}

/// int_0^T (xi - A) Q (xi - A) dT in closed form.
inline double quadratic_phase(const RMat& q, const RVec& xi, const DrivingProfile& drive, double t) {
  const RVec h = drive.integral(t);
  const RMat aa = drive.quadratic_integral(t);
  return xi.dot(q * xi) * t - 2.0 * xi.dot(q * h) + (q.array() * aa.array()).sum();
}

}  // namespace detail

/// Generator H_eff(T; xi), N x N Hermitian.
inline CMat effective_generator(const EffectiveModel& model, const RVec& xi, const DrivingProfile& drive, double t) {
  const RVec p = detail::kinetic(xi, drive, t);
  return std::visit(
      [&](const auto& m) -> CMat {
        using M = std::decay_t<decltype(m)>;
        CMat h;
        if constexpr (std::is_same_v<M, TransportModel>) {
          h = CMat::Constant(1, 1, -m.c.dot(p));
        } else if constexpr (std::is_same_v<M, DiracModel>) {
          h = p(0) * m.couplings[0] + p(1) * m.couplings[1];
        } else if constexpr (std::is_same_v<M, SchrodingerModel>) {
          h = CMat::Constant(1, 1, p.dot(m.half_hessian * p));
        } else {
          h = m.alpha * p.squaredNorm() * CMat::Identity(2, 2) + detail::matrix_schrodinger_traceless(m, p);
        }
        return h;
      },
      model.model);
}

struct EffectivePropagatorOptions {
  int n_steps = 2000;
  /// Integrate scalar models numerically instead of in closed form.
  bool force_integrator = false;
};

/// U_eff(T; xi) in slow time T. Transport and Schrodinger are closed form;
/// Dirac and the traceless matrix-Schrodinger part use the exponential
/// midpoint rule with n_steps over [0, T].
inline CMat effective_propagator(const EffectiveModel& model, const RVec& xi, const DrivingProfile& drive, double t,
                                 const EffectivePropagatorOptions& opt = {}) {
  if (xi.size() != drive.dimension()) throw config_error("bad_dimension", "xi and drive dimensions differ");
  if (t == 0.0) return CMat::Identity(static_cast<Eigen::Index>(model.multiplicity()),
                                      static_cast<Eigen::Index>(model.multiplicity()));
  if (opt.force_integrator && model.multiplicity() == 1) {
    if (opt.n_steps < 1) throw config_error("bad_steps", "n_steps must be >= 1");
    const double dt = t / opt.n_steps;
    cplx phase = 1.0;
    for (int s = 0; s < opt.n_steps; ++s)
      phase *= std::exp(-kI * (effective_generator(model, xi, drive, (s + 0.5) * dt)(0, 0).real() * dt));
    return CMat::Constant(1, 1, phase);
  }
  return std::visit(
      [&](const auto& m) -> CMat {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TransportModel>) {
          // -int_0^T c.(xi - A) = -c.(xi T - h(T)); the propagator is exp(+i c.(xi T - h(T)))
          return CMat::Constant(1, 1, std::exp(kI * m.c.dot(xi * t - drive.integral(t))));
        } else if constexpr (std::is_same_v<M, SchrodingerModel>) {
          return CMat::Constant(1, 1, std::exp(-kI * detail::quadratic_phase(m.half_hessian, xi, drive, t)));
        } else if constexpr (std::is_same_v<M, DiracModel>) {
          return detail::integrate2([&](double s) { return effective_generator(model, xi, drive, s); }, t,
                                    opt.n_steps);
        } else {
          const RMat q = m.alpha * RMat::Identity(2, 2);
          const cplx scalar = std::exp(-kI * detail::quadratic_phase(q, xi, drive, t));
          const CMat rest = detail::integrate2(
              [&](double s) { return detail::matrix_schrodinger_traceless(m, detail::kinetic(xi, drive, s)); }, t,
              opt.n_steps);
          return scalar * rest;
        }
      },
      model.model);
}

/// The traceless factor: the full propagator for Dirac, the matrix part
/// without the alpha |P|^2 phase for matrix-Schrodinger, the propagator
/// itself for scalar models.
inline CMat effective_traceless_propagator(const EffectiveModel& model, const RVec& xi, const DrivingProfile& drive,
                                           double t, const EffectivePropagatorOptions& opt = {}) {
  if (const auto* m = std::get_if<MatrixSchrodingerModel>(&model.model))
    return detail::integrate2(
        [&](double s) { return detail::matrix_schrodinger_traceless(*m, detail::kinetic(xi, drive, s)); }, t,
        opt.n_steps);
  return effective_propagator(model, xi, drive, t, opt);
}

/// U_eff(T_per; xi).
inline CMat effective_multiplier(const EffectiveModel& model, const RVec& xi, const DrivingProfile& drive,
                                 const EffectivePropagatorOptions& opt = {}) {
  return effective_propagator(model, xi, drive, drive.period(), opt);
}

/// Exponents theta of an N x N unitary (z = e^{-i theta}), ascending.
inline RVec unitary_exponents(const CMat& u) {
  Monodromy m;
  m.matrix = u;
  decompose_unitary(m);
  return m.exponents;
}

struct SpectralEnclosure {
  std::string model;
  std::string method;
  double d0 = 0.0;
  double g0 = 0.0;
  double sweep_max = 0.0;
  double margin = 0.0;
  double lipschitz = 0.0;
  double spacing = 0.0;
  int per_axis = 0;
  std::size_t nodes = 0;
};

/// g0(d0): sup over |xi| <= d0 of the largest |exponent| of U_eff(T_per; xi).
/// Transport and Schrodinger use the exact range of their phases. Matrix
/// models sweep a closed grid plus the boundary circle and the origin, and
/// add (Lipschitz estimate) x (spacing).
inline SpectralEnclosure effective_monodromy_bound(const EffectiveModel& model, double d0, const DrivingProfile& drive,
                                                   int per_axis = 24, const EffectivePropagatorOptions& opt = {},
                                                   int threads = 1) {
  if (!(d0 > 0.0)) throw config_error("bad_bandwidth", "d0 must be positive");
  SpectralEnclosure enc;
  enc.model = model.name();
  enc.d0 = d0;
  const double T = drive.period();
  if (const auto* m = std::get_if<TransportModel>(&model.model)) {
    enc.method = "closed_form";
    enc.g0 = enc.sweep_max = m->c.norm() * d0 * T;
  } else if (const auto* s = std::get_if<SchrodingerModel>(&model.model)) {
    enc.method = "closed_form";
    Eigen::SelfAdjointEigenSolver<RMat> es(s->half_hessian);
    const double c0 = (s->half_hessian.array() * drive.quadratic_integral(T).array()).sum();
    const double lo = T * d0 * d0 * std::min(es.eigenvalues().minCoeff(), 0.0) + c0;
    const double hi = T * d0 * d0 * std::max(es.eigenvalues().maxCoeff(), 0.0) + c0;
    enc.g0 = enc.sweep_max = std::max(std::abs(lo), std::abs(hi));
  } else {
    enc.method = "grid_sweep";
    enc.per_axis = per_axis;
    // nodes on a closed tensor grid over [-d0, d0]^n clipped to the ball
    const int n = model.dimension();
    const double h = 2.0 * d0 / (per_axis - 1);
    enc.spacing = h;
    std::vector<RVec> nodes;
    std::vector<std::array<int, 2>> idx;
    for (int i = 0; i < per_axis; ++i)
      for (int j = 0; j < (n == 2 ? per_axis : 1); ++j) {
        RVec xi(n);
        xi(0) = -d0 + i * h;
        if (n == 2) xi(1) = -d0 + j * h;
        if (xi.norm() <= d0 * (1.0 + 1e-12)) {
          nodes.push_back(xi);
          idx.push_back({i, j});
        }
      }
    enc.nodes = nodes.size();
    std::vector<double> f(nodes.size());
    parallel_for(nodes.size(), threads, [&](std::size_t i) {
      f[i] = unitary_exponents(effective_multiplier(model, nodes[i], drive, opt)).cwiseAbs().maxCoeff();
    });
    std::map<std::array<int, 2>, std::size_t> where;
    for (std::size_t i = 0; i < idx.size(); ++i) where[idx[i]] = i;
    double lip = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      enc.sweep_max = std::max(enc.sweep_max, f[i]);
      for (auto step : {std::array<int, 2>{1, 0}, std::array<int, 2>{0, 1}}) {
        auto it = where.find({idx[i][0] + step[0], idx[i][1] + step[1]});
        if (it != where.end()) lip = std::max(lip, std::abs(f[i] - f[it->second]) / h);
      }
    }
    if (n == 2) {
      // the sweep maximum usually sits on |xi| = d0, which the tensor grid barely touches
      const int n_ring = 4 * per_axis;
      std::vector<double> ring(static_cast<std::size_t>(n_ring));
      parallel_for(ring.size(), threads, [&](std::size_t a) {
        const double phi = kTwoPi * static_cast<double>(a) / n_ring;
        RVec xi(2);
        xi << d0 * std::cos(phi), d0 * std::sin(phi);
        ring[a] = unitary_exponents(effective_multiplier(model, xi, drive, opt)).cwiseAbs().maxCoeff();
      });
      const double arc = kTwoPi * d0 / n_ring;
      for (std::size_t a = 0; a < ring.size(); ++a) {
        enc.sweep_max = std::max(enc.sweep_max, ring[a]);
        lip = std::max(lip, std::abs(ring[a] - ring[(a + 1) % ring.size()]) / arc);
      }
      enc.nodes += ring.size();
    }
    const double center = unitary_exponents(effective_multiplier(model, RVec::Zero(n), drive, opt)).cwiseAbs().maxCoeff();
    enc.sweep_max = std::max(enc.sweep_max, center);
    ++enc.nodes;
    enc.lipschitz = lip;
    // every point of the ball is within h sqrt(n) / 2 of a node, up to the
    // boundary layer which is covered by the full spacing
    enc.margin = lip * h * std::sqrt(static_cast<double>(n));
    enc.g0 = enc.sweep_max + enc.margin;
  }
  if (!(enc.g0 < kPi))
    throw hypothesis_error("enclosure_failure", "g0 = " + std::to_string(enc.g0) + " >= pi; reduce d0");
  return enc;
}

/// Nodewise alpha-hat(xi) -> U_eff(T; xi) alpha-hat(xi), with T slow time.
inline Envelope apply_effective(const Envelope& env, const EffectiveModel& model, const DrivingProfile& drive,
                                double t, const EffectivePropagatorOptions& opt = {}, int threads = 1) {
  if (env.multiplicity != model.multiplicity())
    throw config_error("bad_envelope", "envelope and model multiplicities differ");
  Envelope out = env;
  parallel_for(env.size(), threads, [&](std::size_t i) {
    out.amplitude[i] = effective_propagator(model, env.xi[i], drive, t, opt) * env.amplitude[i];
  });
  return out;
}

struct LowerBound {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// |(e^{-i nu0} - M_eff) f| against 2 sin((nu0 - g0)/2) |f|, nodewise.
inline LowerBound lower_bound_check(const EffectiveModel& model, double nu0, double g0, const Envelope& env,
                                    const DrivingProfile& drive, const EffectivePropagatorOptions& opt = {}) {
  if (!(nu0 > g0) || nu0 > kPi)
    throw config_error("bad_nu0", "nu0 must lie in (g0, pi]");
  const Envelope m = apply_effective(env, model, drive, drive.period(), opt);
  double acc = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i)
    acc += env.weights[i] * (std::exp(-kI * nu0) * env.amplitude[i] - m.amplitude[i]).squaredNorm();
  return {std::sqrt(acc), 2.0 * std::sin(0.5 * (nu0 - g0)) * env.norm()};
}

struct ValidationSetup {
  std::shared_ptr<const Crystal> crystal;
  BandTarget target;
  DrivingProfile drive = DrivingProfile::none(1);
  EffectiveModel model{TransportModel{RVec::Ones(1)}, 1};
  EvolutionOptions evolution;
  double d0 = 0.25;
  /// Width of the Gaussian envelope profile, in units of xi.
  double width = 0.1;
  int per_axis = 32;
  int n_checkpoints = 8;
  double max_dt = 0.01;
  EffectivePropagatorOptions effective;
  int threads = 1;
};

struct ValidationResult {
  double eps = 0.0;
  std::vector<double> times;  // fast time t
  std::vector<double> errors;
  double max_error = 0.0;
  std::size_t fibers = 0;
};

/// Full fiber dynamics of a normalized BL packet against the effective
/// evolution, compared at n_checkpoints equally spaced times in (0, T_per^eps].
inline ValidationResult validate_effective(const ValidationSetup& s, double eps) {
  if (!s.crystal) throw config_error("missing_crystal", "validation has no crystal");
  if (s.n_checkpoints < 1) throw config_error("bad_checkpoints", "n_checkpoints must be >= 1");
  if (s.model.multiplicity() != s.target.multiplicity)
    throw config_error("bad_model", "effective model multiplicity differs from the target multiplicity");
  if (s.model.exponent != s.drive.exponent())
    throw config_error("bad_exponent", "model and drive scaling exponents differ");
  ValidationResult r;
  r.eps = eps;
  auto bank = make_fiber_bank(s.crystal, anchored_grid(s.target.k_star, eps, s.per_axis), s.threads);
  r.fibers = bank->size();
  CVec dir = CVec::Ones(static_cast<Eigen::Index>(s.target.multiplicity));
  Envelope env = envelope_on_grid(bank->grid, s.d0, s.target.multiplicity, gaussian_profile(s.width, dir));
  const double norm = env.norm();
  if (norm == 0.0) throw config_error("bad_envelope", "envelope has no nodes inside |xi| <= d0");
  for (auto& a : env.amplitude) a /= norm;
  const StateFiberRep psi0 = synthesize_bl(env, s.target, bank);

  const double scale = std::pow(eps, s.drive.exponent());
  const double period = s.drive.period() / scale;
  for (int m = 1; m <= s.n_checkpoints; ++m) r.times.push_back(period * m / s.n_checkpoints);

  EvolutionOptions opt = s.evolution;
  opt.energy_shift = s.target.energy;
  std::vector<std::vector<CVec>> full(bank->size());
  const auto map = align_envelope(env, bank->grid);
  parallel_for(map.size(), s.threads, [&](std::size_t i) {
    const std::size_t j = map[i];
    FiberGenerator gen(*s.crystal, bank->fibers[j], s.drive, eps, opt);
    full[j] = propagate_state(gen, psi0.plane_wave(j), r.times, s.max_dt);
  });
  for (std::size_t m = 0; m < r.times.size(); ++m) {
    const Envelope e = apply_effective(env, s.model, s.drive, scale * r.times[m], s.effective, s.threads);
    const StateFiberRep eff = synthesize_bl(e, s.target, bank);
    double acc = 0.0;
    for (std::size_t j = 0; j < bank->size(); ++j) {
      const CVec diff = full[j].empty() ? CVec(-eff.plane_wave(j)) : CVec(full[j][m] - eff.plane_wave(j));
      acc += bank->grid.weights[j] * diff.squaredNorm();
    }
    r.errors.push_back(std::sqrt(acc));
    r.max_error = std::max(r.max_error, r.errors.back());
  }
  return r;
}

/// Effective model chosen from a degeneracy classification.
inline EffectiveModel model_from_degeneracy(const Crystal& crystal, const DegeneracyInfo& info) {
  switch (info.kind) {
    case DegeneracyKind::Noncritical:
      if (!info.velocity) throw config_error("missing_velocity", "noncritical point without a velocity");
      return transport_model(info.velocity->c());
    case DegeneracyKind::Dirac: {
      if (!info.dirac) throw config_error("missing_dirac", "Dirac point without a cone fit");
      const BandTarget t = make_target(crystal, info.k_star, info.band, 2);
      return dirac_model_from_modes(crystal, t, info.dirac->fine.velocity);
    }
    case DegeneracyKind::QuadraticSimple:
      if (!info.hessian) throw config_error("missing_hessian", "critical point without a Hessian");
      return schrodinger_model(0.5 * *info.hessian);
    case DegeneracyKind::QuadraticDouble:
      if (!info.quadratic) throw config_error("missing_quadratic", "quadratic touching without coefficients");
      return matrix_schrodinger_model(info.quadratic->alpha, info.quadratic->gamma_tilde, info.quadratic->beta);
  }
  throw config_error("bad_model", "unknown degeneracy kind");
}

}  // namespace floquet

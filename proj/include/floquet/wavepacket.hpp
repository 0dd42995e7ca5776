#pragma once

// Band-limited wavepackets, the energy-momentum window P0, and the
// near-invariance experiment harness. Everything lives in fiber coordinates.

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/drive.hpp"
#include "floquet/evolve.hpp"
#include "floquet/lattice.hpp"
#include "floquet/spectral.hpp"

namespace floquet {

/// The degenerate modes Phi* at k*: energy E*, zero-based first band b*,
/// multiplicity N, and plane-wave coefficients p* (basis size x N).
struct BandTarget {
  RVec k_star;
  double energy = 0.0;
  std::size_t band = 0;
  std::size_t multiplicity = 1;
  CMat modes;
};

inline BandTarget make_target(const Crystal& crystal, const RVec& k_star, std::size_t band, std::size_t multiplicity) {
  if (band + multiplicity > crystal.size()) throw config_error("bad_band", "target bands exceed the basis size");
  const FiberSystem f = assemble_fiber(crystal, k_star);
  BandTarget t;
  t.k_star = k_star;
  t.band = band;
  t.multiplicity = multiplicity;
  const auto b = static_cast<Eigen::Index>(band), n = static_cast<Eigen::Index>(multiplicity);
  t.energy = f.energies.segment(b, n).mean();
  t.modes = f.vectors.middleCols(b, n);
  return t;
}

/// alpha-hat on envelope nodes |xi| <= d0, with weights.
struct Envelope {
  int dimension = 1;
  std::size_t multiplicity = 1;
  double d0 = 1.0;
  std::vector<RVec> xi;
  std::vector<double> weights;
  std::vector<CVec> amplitude;

  std::size_t size() const { return xi.size(); }
  double squared_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) s += weights[i] * amplitude[i].squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }
};

using EnvelopeProfile = std::function<CVec(const RVec&)>;

/// Envelope on the xi-nodes of an anchored grid that satisfy |xi| <= d0, so
/// every node sits on a fiber.
inline Envelope envelope_on_grid(const BrillouinGrid& grid, double d0, std::size_t multiplicity,
                                 const EnvelopeProfile& profile) {
  if (!grid.anchor) throw config_error("grid_misaligned", "envelope needs an anchored fiber grid");
  if (!(d0 > 0.0)) throw config_error("bad_bandwidth", "d0 must be positive");
  Envelope env;
  env.dimension = static_cast<int>(grid.anchor->size());
  env.multiplicity = multiplicity;
  env.d0 = d0;
  const double jac = std::pow(grid.scale, env.dimension);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (grid.xi[j].norm() > d0) continue;
    CVec a = profile(grid.xi[j]);
    if (static_cast<std::size_t>(a.size()) != multiplicity)
      throw config_error("bad_envelope", "envelope amplitude has the wrong length");
    env.xi.push_back(grid.xi[j]);
    env.weights.push_back(grid.weights[j] / jac);
    env.amplitude.push_back(std::move(a));
  }
  return env;
}

/// Standalone envelope on a midpoint ball grid.
inline Envelope envelope_on_ball(int dimension, double d0, int per_axis, std::size_t multiplicity,
                                 const EnvelopeProfile& profile) {
  auto [nodes, weights] = ball_midpoint_grid(dimension, d0 * (1.0 + 1e-12), per_axis);
  Envelope env;
  env.dimension = dimension;
  env.multiplicity = multiplicity;
  env.d0 = d0;
  env.xi = std::move(nodes);
  env.weights = std::move(weights);
  for (const auto& x : env.xi) env.amplitude.push_back(profile(x));
  return env;
}

/// Gaussian profile exp(-|xi|^2 / (2 s^2)) times a fixed N-vector.
inline EnvelopeProfile gaussian_profile(double width, const CVec& direction) {
  return [width, direction](const RVec& xi) -> CVec {
    return direction * std::exp(-xi.squaredNorm() / (2.0 * width * width));
  };
}

/// Maps envelope nodes onto fiber indices of an anchored grid. Throws when a
/// node has no matching fiber.
inline std::vector<std::size_t> align_envelope(const Envelope& env, const BrillouinGrid& grid) {
  if (!grid.anchor || grid.xi.size() != grid.size())
    throw config_error("grid_misaligned", "fiber grid is not anchored at k*");
  std::map<std::vector<long long>, std::size_t> index;
  auto key = [](const RVec& x) {
    std::vector<long long> k;
    for (Eigen::Index i = 0; i < x.size(); ++i) k.push_back(std::llround(x(i) * 1e9));
    return k;
  };
  for (std::size_t j = 0; j < grid.size(); ++j) index[key(grid.xi[j])] = j;
  std::vector<std::size_t> out;
  for (const auto& x : env.xi) {
    auto it = index.find(key(x));
    if (it == index.end()) throw config_error("grid_misaligned", "envelope node has no fiber on the grid");
    out.push_back(it->second);
  }
  return out;
}

/// u = alpha(eps x)^T Phi*(x) in fiber coordinates: at fiber k* + eps xi the
/// periodic part is eps^{-n/2} p* alpha-hat(xi), expanded in the H(k)
/// eigenbasis. With fiber weights eps^n dxi^n this gives |u| = |alpha|.
inline StateFiberRep synthesize_bl(const Envelope& env, const BandTarget& target,
                                   std::shared_ptr<const FiberBank> bank) {
  const auto& grid = bank->grid;
  if (!grid.anchor || (*grid.anchor - target.k_star).norm() > 1e-12)
    throw config_error("grid_misaligned", "fiber grid is not anchored at k*");
  if (env.multiplicity != target.multiplicity)
    throw config_error("bad_envelope", "envelope and target multiplicities differ");
  const auto map = align_envelope(env, grid);
  const double scale = std::pow(grid.scale, -0.5 * env.dimension);
  StateFiberRep s = StateFiberRep::zero(bank);
  for (std::size_t i = 0; i < env.size(); ++i) s.set_plane_wave(map[i], scale * (target.modes * env.amplitude[i]));
  return s;
}

/// Envelope read back from a state by projecting each fiber onto p*.
inline Envelope extract_envelope(const StateFiberRep& s, const BandTarget& target, const Envelope& like) {
  const auto map = align_envelope(like, s.bank->grid);
  const double scale = std::pow(s.bank->grid.scale, 0.5 * like.dimension);
  Envelope out = like;
  for (std::size_t i = 0; i < like.size(); ++i) out.amplitude[i] = scale * (target.modes.adjoint() * s.plane_wave(map[i]));
  return out;
}

struct WindowSpec {
  RVec k_star;
  double e_star = 0.0;
  double eps = 0.1;
  double L = 1.0;

  void validate() const {
    if (!(eps > 0.0)) throw config_error("bad_epsilon", "window epsilon must be positive");
    if (!(L > 0.0)) throw config_error("bad_window", "window width L must be positive");
  }
};

inline WindowSpec window_for(const BandTarget& t, double eps, double L = 1.0) { return {t.k_star, t.energy, eps, L}; }

/// Keeps fibers with |k - k*| < eps and, there, bands with |E_b - E*| < L eps.
inline StateFiberRep project_p0(const StateFiberRep& s, const WindowSpec& w) {
  w.validate();
  StateFiberRep out = s;
  for (std::size_t j = 0; j < s.coeffs.size(); ++j) {
    const auto& fiber = s.bank->fibers[j];
    if ((fiber.k - w.k_star).norm() >= w.eps) {
      out.coeffs[j].setZero();
      continue;
    }
    for (Eigen::Index b = 0; b < fiber.energies.size(); ++b)
      if (std::abs(fiber.energies(b) - w.e_star) >= w.L * w.eps) out.coeffs[j](b) = 0.0;
  }
  return out;
}

/// rho = |(I - P0) u| / |u|.
inline double bl_alignment(const StateFiberRep& u, const WindowSpec& w) {
  const double n = u.norm();
  if (n == 0.0) throw numeric_error("zero_state", "alignment of the zero state is undefined");
  return (u - project_p0(u, w)).norm() / n;
}

/// Orthogonal projector onto BL states with bandwidth d0: fibers with
/// |xi| <= d0 keep their component along span p*.
inline StateFiberRep project_bl(const StateFiberRep& s, const BandTarget& target, double d0) {
  const auto& grid = s.bank->grid;
  if (!grid.anchor) throw config_error("grid_misaligned", "BL projection needs an anchored grid");
  StateFiberRep out = StateFiberRep::zero(s.bank);
  for (std::size_t j = 0; j < s.coeffs.size(); ++j) {
    if (grid.xi[j].norm() > d0) continue;
    out.set_plane_wave(j, target.modes * (target.modes.adjoint() * s.plane_wave(j)));
  }
  return out;
}

/// u_eps[f]: keep |k - k*| < eps and replace each fiber by its overlap with
/// p*. A BL state with d0 = 1.
inline StateFiberRep forward_wavepacket(const StateFiberRep& f, const BandTarget& target, double eps) {
  StateFiberRep out = StateFiberRep::zero(f.bank);
  for (std::size_t j = 0; j < f.coeffs.size(); ++j) {
    if ((f.bank->fibers[j].k - target.k_star).norm() >= eps) continue;
    out.set_plane_wave(j, target.modes * (target.modes.adjoint() * f.plane_wave(j)));
  }
  return out;
}

/// Complex Gaussian coefficients on every fiber and band.
inline StateFiberRep random_state(std::shared_ptr<const FiberBank> bank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  StateFiberRep s = StateFiberRep::zero(std::move(bank));
  for (auto& c : s.coeffs)
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = cplx(g(rng), g(rng));
  return s;
}

inline Envelope random_envelope(const Envelope& like, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Envelope e = like;
  for (auto& a : e.amplitude)
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = cplx(g(rng), g(rng));
  return e;
}

using StateOp = std::function<StateFiberRep(const StateFiberRep&)>;

struct NormEstimate {
  double value = 0.0;
  double best_probe = 0.0;
  int probes = 0;
  int power_steps = 0;
};

/// Lower bound on |X| from the best of the probes, refined by power iteration
/// on the Gram operator X^* X starting at the best probe.
inline NormEstimate estimate_norm(const std::vector<StateFiberRep>& probes, const StateOp& apply, const StateOp& gram,
                                  int power_steps) {
  NormEstimate est;
  est.probes = static_cast<int>(probes.size());
  const StateFiberRep* best = nullptr;
  for (const auto& p : probes) {
    const double n = p.norm();
    if (n == 0.0) continue;
    const double r = apply(p).norm() / n;
    if (!best || r > est.best_probe) {
      est.best_probe = r;
      best = &p;
    }
  }
  est.value = est.best_probe;
  if (!best) return est;
  StateFiberRep v = (1.0 / best->norm()) * *best;
  for (int i = 0; i < power_steps; ++i) {
    StateFiberRep w = gram(v);
    const double nw = w.norm();
    if (nw == 0.0) break;
    v = (1.0 / nw) * w;
    est.value = std::max(est.value, apply(v).norm());
    ++est.power_steps;
  }
  return est;
}

/// |P0 f - u_eps[f]| / |f| estimated over random f.
inline NormEstimate forward_residual(std::shared_ptr<const FiberBank> bank, const BandTarget& target,
                                     const WindowSpec& w, int n_probe, int power_steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StateFiberRep> probes;
  for (int i = 0; i < n_probe; ++i) probes.push_back(random_state(bank, rng));
  StateOp d = [&](const StateFiberRep& f) { return project_p0(f, w) - forward_wavepacket(f, target, w.eps); };
  StateOp gram = [&](const StateFiberRep& f) { return d(d(f)); };
  return estimate_norm(probes, d, gram, power_steps);
}

// ---------------------------------------------------------------------------
// Averaging identity

/// p(x) = sum_G p_G e^{iG.x} over a finite set of dual-lattice vectors.
struct PeriodicFunction {
  Lattice lattice;
  std::map<Miller, cplx> coeffs;

  cplx operator()(const RVec& x) const {
    cplx s = 0.0;
    for (const auto& [g, c] : coeffs) s += c * std::exp(kI * lattice.cartesian(g).dot(x));
    return s;
  }
  /// (1/|Omega|) int_Omega p.
  cplx cell_mean() const {
    auto it = coeffs.find(Miller{});
    return it == coeffs.end() ? cplx(0.0) : it->second;
  }
};

/// q(X) = int q-hat(xi) e^{i xi.X} dxi with q-hat supported in |xi| <= radius
/// (a cube in 2D, masked by the callback), evaluated by Gauss-Legendre.
struct BandLimitedFunction {
  int dimension = 1;
  double radius = 1.0;
  std::function<cplx(const RVec&)> qhat;

  static constexpr int kNodes = 100;

  cplx operator()(const RVec& x) const {
    using GL = boost::math::quadrature::gauss<double, kNodes>;
    const auto& a = GL::abscissa();
    const auto& w = GL::weights();
    std::vector<std::pair<double, double>> rule;  // node, weight on [-radius, radius]
    for (std::size_t i = 0; i < a.size(); ++i) {
      rule.emplace_back(radius * a[i], radius * w[i]);
      if (a[i] != 0.0) rule.emplace_back(-radius * a[i], radius * w[i]);
    }
    cplx s = 0.0;
    RVec xi(dimension);
    if (dimension == 1) {
      for (const auto& [u, wu] : rule) {
        xi(0) = u;
        s += wu * qhat(xi) * std::exp(kI * (u * x(0)));
      }
    } else {
      for (const auto& [u, wu] : rule)
        for (const auto& [v, wv] : rule) {
          xi << u, v;
          s += wu * wv * qhat(xi) * std::exp(kI * xi.dot(x));
        }
    }
    return s;
  }

  /// int q = (2 pi)^n q-hat(0).
  cplx integral() const { return std::pow(kTwoPi, dimension) * qhat(RVec::Zero(dimension)); }
};

/// Largest eps for which the identity is guaranteed:
/// (shortest nonzero dual vector) / (2 * support radius).
inline double averaging_threshold(const Lattice& lattice, double radius) {
  double shortest = std::numeric_limits<double>::infinity();
  const int r1 = lattice.dimension() == 2 ? 2 : 0;
  for (int i = -2; i <= 2; ++i)
    for (int j = -r1; j <= r1; ++j) {
      Miller m{{i, j}};
      if (!m.is_zero()) shortest = std::min(shortest, lattice.cartesian(m).norm());
    }
  return shortest / (2.0 * radius);
}

struct AveragingResult {
  cplx lhs;
  cplx rhs;
  double eps = 0.0;
  double eps0 = 0.0;
};

/// lhs = int p(x) q(eps x) dx by trapezoid on the box |x_i| <= box/(2 eps);
/// rhs = eps^{-n} (cell mean of p) (int q).
inline AveragingResult averaging_identity(const PeriodicFunction& p, const BandLimitedFunction& q, double eps,
                                          double box = 40.0, int nodes = 1 << 14) {
  const int n = p.lattice.dimension();
  if (q.dimension != n) throw config_error("bad_dimension", "p and q dimensions differ");
  AveragingResult r;
  r.eps = eps;
  r.eps0 = averaging_threshold(p.lattice, q.radius);
  if (!(eps > 0.0) || eps >= r.eps0)
    throw hypothesis_error("averaging_eps_too_large",
                           "eps = " + std::to_string(eps) + " is not below eps0 = " + std::to_string(r.eps0));
  const double half = 0.5 * box / eps;
  const double h = 2.0 * half / nodes;
  std::vector<double> xs(static_cast<std::size_t>(nodes) + 1);
  std::vector<double> ws(xs.size(), h);
  for (int i = 0; i <= nodes; ++i) xs[static_cast<std::size_t>(i)] = -half + i * h;
  ws.front() = ws.back() = 0.5 * h;
  cplx acc = 0.0;
  RVec x(n);
  if (n == 1) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      x(0) = xs[i];
      acc += ws[i] * p(x) * q(eps * x);
    }
  } else {
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < xs.size(); ++j) {
        x << xs[i], xs[j];
        acc += ws[i] * ws[j] * p(x) * q(eps * x);
      }
  }
  r.lhs = acc;
  r.rhs = std::pow(eps, -n) * p.cell_mean() * q.integral();
  return r;
}

// ---------------------------------------------------------------------------
// Near-invariance experiment

enum class ProbeMode { P0Random, BLPacket };

inline const char* to_string(ProbeMode m) { return m == ProbeMode::P0Random ? "p0_random" : "bl_packet"; }

struct InvarianceSetup {
  std::shared_ptr<const Crystal> crystal;
  BandTarget target;
  DrivingProfile drive = DrivingProfile::none(1);
  /// Only the sign switch is read; the energy shift is always E*.
  EvolutionOptions evolution;
  double g = kPi / 2;
  double g0 = 0.0;
  std::vector<double> eps;
  ProbeMode mode = ProbeMode::P0Random;
  double d0 = 1.0;
  double L = 1.0;
  int per_axis = 16;
  int n_probe = 16;
  int power_steps = 8;
  std::uint64_t seed = 1;
  double max_dt = 0.01;
  int min_steps = 64;
  int threads = 1;
};

struct ResidualRow {
  double eps = 0.0;
  double residual = 0.0;
  double best_probe = 0.0;
  std::uint64_t seed = 0;
  std::size_t fibers = 0;
  int steps = 0;
};

struct ResidualTable {
  ProbeMode mode = ProbeMode::P0Random;
  double g = 0.0;
  double g0 = 0.0;
  int n_probe = 0;
  int power_steps = 0;
  std::vector<ResidualRow> rows;
  double exponent = std::nan("");
  std::vector<std::string> warnings;

  void fit() {
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
      xs.push_back(r.eps);
      ys.push_back(r.residual);
    }
    exponent = loglog_slope(xs, ys);
  }
};

inline int steps_for(double period, double max_dt, int min_steps) {
  return std::max(min_steps, static_cast<int>(std::ceil(period / max_dt - 1e-9)));
}

/// r(eps) = |Pi[S^1 \ (-g, g)] o X| with X = P0 (p0_random) or the BL
/// projector (bl_packet), estimated per eps from seeded probes.
inline ResidualTable near_invariance_experiment(const InvarianceSetup& s) {
  if (!s.crystal) throw config_error("missing_crystal", "experiment has no crystal");
  if (!(s.g > s.g0))
    throw config_error("arc_inside_enclosure", "arc half-width g = " + std::to_string(s.g) +
                                                   " must exceed the effective enclosure g0 = " + std::to_string(s.g0));
  if (!(s.g < kPi)) throw config_error("bad_arc", "arc half-width must be below pi");
  if (s.eps.empty()) throw config_error("bad_epsilon", "epsilon list is empty");
  ResidualTable table;
  table.mode = s.mode;
  table.g = s.g;
  table.g0 = s.g0;
  table.n_probe = s.n_probe;
  table.power_steps = s.power_steps;
  EvolutionOptions opt = s.evolution;
  opt.energy_shift = s.target.energy;
  const Arc outside = Arc::symmetric(s.g).complement();

  for (std::size_t i = 0; i < s.eps.size(); ++i) {
    const double eps = s.eps[i];
    auto bank = make_fiber_bank(s.crystal, anchored_grid(s.target.k_star, eps, s.per_axis), s.threads);
    const double period = s.drive.period() / std::pow(eps, s.drive.exponent());
    const int steps = s.drive.is_zero() ? 1 : steps_for(period, s.max_dt, s.min_steps);
    const auto monos = fiber_monodromies(*bank, s.drive, eps, steps, opt, s.threads);
    for (const auto& m : monos)
      for (const auto& msg : m.warnings) table.warnings.push_back(msg);

    ResidualRow row;
    row.eps = eps;
    row.seed = s.seed + i;
    row.fibers = bank->size();
    row.steps = steps;
    std::mt19937_64 rng(row.seed);
    std::vector<StateFiberRep> probes;
    StateOp project;
    if (s.mode == ProbeMode::P0Random) {
      const WindowSpec w = window_for(s.target, eps, s.L);
      project = [w](const StateFiberRep& f) { return project_p0(f, w); };
      for (int p = 0; p < s.n_probe; ++p) probes.push_back(project(random_state(bank, rng)));
    } else {
      const double d0 = s.d0;
      const BandTarget& t = s.target;
      project = [&t, d0](const StateFiberRep& f) { return project_bl(f, t, d0); };
      const Envelope like = envelope_on_grid(bank->grid, d0, t.multiplicity,
                                             [&](const RVec&) { return CVec::Zero(static_cast<Eigen::Index>(t.multiplicity)).eval(); });
      if (like.size() == 0) throw config_error("bad_bandwidth", "no envelope nodes inside |xi| <= d0");
      for (int p = 0; p < s.n_probe; ++p) probes.push_back(synthesize_bl(random_envelope(like, rng), t, bank));
    }
    std::vector<std::string> boundary;
    StateOp apply = [&](const StateFiberRep& f) { return apply_measure(project(f), outside, monos, &boundary); };
    StateOp gram = [&](const StateFiberRep& f) { return project(apply(f)); };
    const NormEstimate est = estimate_norm(probes, apply, gram, s.power_steps);
    row.residual = est.value;
    row.best_probe = est.best_probe;
    if (!boundary.empty()) table.warnings.push_back(boundary.front());
    table.rows.push_back(row);
  }
  table.fit();
  return table;
}

inline void write_residual_csv(std::ostream& os, const ResidualTable& t) {
  os << "eps,residual,best_probe,fitted_exponent,seed,fibers,steps\n";
  os.precision(17);
  for (const auto& r : t.rows)
    os << r.eps << ',' << r.residual << ',' << r.best_probe << ',' << t.exponent << ',' << r.seed << ',' << r.fibers
       << ',' << r.steps << '\n';
}

}  // namespace floquet

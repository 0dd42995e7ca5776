// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/effective.hpp"
#include "floquet/selftest.hpp"
#include "floquet/spectral.hpp"
#include "floquet/wavepacket.hpp"

using namespace floquet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.4g", v[i]);
  return s + "]";
}

RVec vec1(double x) {
  RVec v(1);
  v << x;
  return v;
}

// 1D V(x) = 2 cos(2 pi x), nine plane waves
std::shared_ptr<const Crystal> cosine_crystal() {
  CosineSumPotential v;
  v.terms = {{Miller{{1, 0}}, 1.0}};
  return std::make_shared<const Crystal>(Crystal::build(make_lattice({{1.0}}), v, 4.5 * kTwoPi));
}

// transport scenario: k* = pi/2, lowest band, sine drive T_per = 0.5
struct Scenario {
  std::shared_ptr<const Crystal> crystal = cosine_crystal();
  BandTarget target = make_target(*crystal, vec1(0.5 * kPi), 0, 1);
  DrivingProfile drive = sine_drive(vec1(1.0), 1.0, 0.5);
  RVec c = group_velocity(*crystal, assemble_fiber(*crystal, vec1(0.5 * kPi)), 0).c();
  EffectiveModel model = transport_model(c);
};

constexpr double kEps3[] = {0.1, 0.05, 0.025};

/// Independent dense H(k) for the cosine crystal: diag (k + 2 pi m)^2, 1 on
/// the first off-diagonals.
RVec oracle_energies(double k) {
  const int n = 9;
  RMat h = RMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    h(i, i) = std::pow(k + kTwoPi * (i - 4), 2);
    if (i + 1 < n) h(i, i + 1) = h(i + 1, i) = 1.0;
  }
  return Eigen::SelfAdjointEigenSolver<RMat>(h).eigenvalues();
}

Outcome criterion1() {
  auto crystal = cosine_crystal();
  const double eps = 0.1;
  const DrivingProfile none = DrivingProfile::none(1, 0.5);
  auto bank = make_fiber_bank(crystal, full_zone_grid(crystal->lattice(), {33}));
  const auto monos = fiber_monodromies(*bank, none, eps, 1);
  double worst = 0.0;
  for (const auto& m : monos) {
    const RVec e = oracle_energies(m.k(0));
    for (int b = 0; b < 4; ++b) {
      const double expect = wrap_angle(e(b) * m.period);
      double d = kPi;
      for (Eigen::Index j = 0; j < m.exponents.size(); ++j)
        d = std::min(d, std::abs(wrap_angle(m.exponents(j) - expect)));
      worst = std::max(worst, d);
    }
  }
  return {worst <= 1e-8 && monos.size() == 33,
          "33 fibers, 4 bands: max |theta - E T mod 2pi| = " + fmt("%.3e", worst) + " (tol 1e-8)"};
}

Outcome criterion2() {
  Scenario sc;
  InvarianceSetup s;
  s.crystal = sc.crystal;
  s.target = sc.target;
  s.drive = DrivingProfile::none(1, 0.5);
  s.L = 1.0;
  s.g0 = s.L * s.drive.period();  // undriven spread of windowed exponents
  s.g = 2.0 * s.g0;
  s.eps = {0.1, 0.05};
  s.per_axis = 32;
  const ResidualTable t = near_invariance_experiment(s);
  double worst = 0.0;
  for (const auto& r : t.rows) worst = std::max(worst, r.residual);
  return {worst <= 1e-12, "A = 0, eps {0.1, 0.05}, g = " + fmt("%.3g", s.g) + ": max r = " + fmt("%.3e", worst) +
                              " (tol 1e-12)"};
}

ResidualTable transport_residuals(ProbeMode mode, double d0) {
  Scenario sc;
  const SpectralEnclosure e = effective_monodromy_bound(sc.model, d0, sc.drive);
  InvarianceSetup s;
  s.crystal = sc.crystal;
  s.target = sc.target;
  s.drive = sc.drive;
  s.g0 = e.g0;
  s.g = e.g0 + 0.25 * (kPi - e.g0);
  s.eps.assign(std::begin(kEps3), std::end(kEps3));
  s.mode = mode;
  s.d0 = d0;
  s.L = 1.0;
  s.per_axis = 32;
  s.seed = 11;
  return near_invariance_experiment(s);
}

Outcome criterion3() {
  const ResidualTable t = transport_residuals(ProbeMode::P0Random, 1.0);
  std::vector<double> r;
  for (const auto& row : t.rows) r.push_back(row.residual);
  return {t.exponent >= 1.5, "p0_random, g0 = " + fmt("%.4f", t.g0) + ", g = " + fmt("%.4f", t.g) + ", r = " + list(r) +
                                 ", fitted exponent " + fmt("%.3f", t.exponent) + " (need >= 1.5)"};
}

Outcome criterion4() {
  const ResidualTable t = transport_residuals(ProbeMode::BLPacket, 0.25);
  std::vector<double> r;
  for (const auto& row : t.rows) r.push_back(row.residual);
  const bool monotone = r[1] < r[0] && r[2] < r[1];
  return {monotone && r[2] < 1e-2, "bl_packet d0 = 0.25, g0 = " + fmt("%.4f", t.g0) + ", r = " + list(r) +
                                       (monotone ? ", monotone" : ", NOT monotone") + ", r(0.025) < 1e-2 required"};
}

Outcome criterion5() {
  Scenario sc;
  const double L = 4.0;  // window must contain the band over the eps-ball: L > |c|
  std::vector<double> eps(std::begin(kEps3), std::end(kEps3)), rho, fwd;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    auto bank = make_fiber_bank(sc.crystal, anchored_grid(sc.target.k_star, eps[i], 32));
    const WindowSpec w = window_for(sc.target, eps[i], L);
    // worst BL packet over seeded envelopes, refined by power iteration
    std::mt19937_64 rng(100 + i);
    const Envelope like = envelope_on_grid(bank->grid, 0.25, 1, [](const RVec&) { return CVec::Ones(1).eval(); });
    std::vector<StateFiberRep> probes;
    for (int p = 0; p < 16; ++p) probes.push_back(synthesize_bl(random_envelope(like, rng), sc.target, bank));
    StateOp off = [&](const StateFiberRep& u) { return project_bl(u, sc.target, 0.25) - project_p0(project_bl(u, sc.target, 0.25), w); };
    StateOp gram = [&](const StateFiberRep& u) { return project_bl(off(u), sc.target, 0.25); };
    rho.push_back(estimate_norm(probes, off, gram, 8).value);
    fwd.push_back(forward_residual(bank, sc.target, w, 16, 8, 200 + i).value);
  }
  const double p_rho = loglog_slope(eps, rho), p_fwd = loglog_slope(eps, fwd);
  return {p_rho >= 1.5 && p_fwd >= 1.5, "L = 4, d0 = 0.25: rho = " + list(rho) + " exponent " + fmt("%.3f", p_rho) +
                                            "; |P0 f - u[f]|/|f| = " + list(fwd) + " exponent " + fmt("%.3f", p_fwd) +
                                            " (both need >= 1.5)"};
}

Outcome criterion6() {
  Scenario sc;
  const double d0 = 1.0, T = 0.5;
  const double oracle = d0 * T * sc.c.norm();
  DrivingProfile two(1, T);
  CVec a(1);
  a << cplx(0.3, -0.4);
  two.set_harmonic(1, a);
  a << cplx(-0.2, 0.1);
  two.set_harmonic(3, a);
  const std::vector<DrivingProfile> drives{sine_drive(vec1(1.0), 1.0, T), cosine_drive(vec1(1.0), 2.5, T), two};
  double dev = 0.0, sweep_dev = 0.0;
  for (const auto& d : drives) {
    const SpectralEnclosure e = effective_monodromy_bound(sc.model, d0, d);
    dev = std::max(dev, std::abs(e.g0 - oracle));
    // independent check: largest exponent over a xi sweep, integrated numerically
    EffectivePropagatorOptions o;
    o.force_integrator = true;
    o.n_steps = 400;
    double mx = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double xi = -d0 + 2.0 * d0 * i / 200;
      mx = std::max(mx, std::abs(unitary_exponents(effective_multiplier(sc.model, vec1(xi), d, o))(0)));
    }
    sweep_dev = std::max(sweep_dev, std::abs(mx - oracle));
  }
  return {dev <= 1e-10 && sweep_dev <= 1e-10,
          "g0 oracle d0 T |c| = " + fmt("%.12f", oracle) + ", max |g0 - oracle| over 3 drives = " + fmt("%.2e", dev) +
              ", integrated sweep deviation " + fmt("%.2e", sweep_dev) + " (tol 1e-10)"};
}

Outcome criterion7() {
  Scenario sc;
  ValidationSetup s;
  s.crystal = sc.crystal;
  s.target = sc.target;
  s.drive = sc.drive;
  s.model = sc.model;
  s.d0 = 1.0;
  s.width = 0.25;
  s.per_axis = 32;
  s.n_checkpoints = 8;
  const double e1 = validate_effective(s, 0.1).max_error, e2 = validate_effective(s, 0.05).max_error;
  const double ratio = e1 / e2;
  return {ratio >= 1.4 && ratio <= 2.6, "sup error eps=0.1: " + fmt("%.4e", e1) + ", eps=0.05: " + fmt("%.4e", e2) +
                                            ", ratio " + fmt("%.3f", ratio) + " (need [1.4, 2.6])"};
}

Outcome criterion8() {
  Scenario sc;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss;

  // centering: driven fibers of the scenario
  auto bank = make_fiber_bank(sc.crystal, anchored_grid(sc.target.k_star, 0.1, 10));
  EvolutionOptions opt;
  opt.energy_shift = sc.target.energy;
  const auto monos = fiber_monodromies(*bank, sc.drive, 0.1, 500, opt);
  int centering_ok = 0;
  for (int r = 0; r < 100; ++r) {
    const Monodromy& m = monos[static_cast<std::size_t>(r) % monos.size()];
    const double mid = kPi * (2.0 * u01(rng) - 1.0), len = kTwoPi * (0.01 + 0.99 * u01(rng));
    const Arc arc{wrap_angle(mid - 0.5 * len), wrap_angle(mid + 0.5 * len)};
    CVec v(m.matrix.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(gauss(rng), gauss(rng));
    const CenteringResidual c = centering_residual(m, arc, v);
    if (c.eta <= c.bound + 1e-12) ++centering_ok;
  }

  // lower bound: transport envelopes and Dirac envelopes
  int lower_ok = 0;
  const SpectralEnclosure et = effective_monodromy_bound(sc.model, 1.0, sc.drive);
  const Envelope base1 = envelope_on_ball(1, 1.0, 24, 1, [](const RVec&) { return CVec::Ones(1).eval(); });
  const EffectiveModel dirac = dirac_model(1.0);
  const DrivingProfile circ = circular_drive(1.0, kTwoPi);
  const SpectralEnclosure ed = effective_monodromy_bound(dirac, 0.2, circ, 16);
  const Envelope base2 = envelope_on_ball(2, 0.2, 8, 2, [](const RVec&) { return CVec::Ones(2).eval(); });
  EffectivePropagatorOptions eo;
  eo.n_steps = 500;
  for (int r = 0; r < 100; ++r) {
    const bool d = r % 2;
    const double g0 = d ? ed.g0 : et.g0;
    const double nu0 = g0 + (kPi - g0) * (0.001 + 0.999 * u01(rng));
    const LowerBound lb = d ? lower_bound_check(dirac, nu0, g0, random_envelope(base2, rng), circ, eo)
                            : lower_bound_check(sc.model, nu0, g0, random_envelope(base1, rng), sc.drive);
    if (lb.lhs >= lb.rhs - 1e-12) ++lower_ok;
  }

  // averaging: random trigonometric p, truncated Gaussian q-hat on |xi| <= 3
  int avg_ok = 0;
  double worst_avg = 0.0;
  const Lattice lat = make_lattice({{1.0}});
  BandLimitedFunction q;
  q.dimension = 1;
  q.radius = 3.0;
  q.qhat = [](const RVec& xi) { return cplx(std::abs(xi(0)) <= 3.0 ? std::exp(-xi(0) * xi(0) / (2 * 0.25)) : 0.0); };
  const double eps0 = averaging_threshold(lat, q.radius);
  for (int r = 0; r < 100; ++r) {
    PeriodicFunction p{lat, {}};
    for (int g = -2; g <= 2; ++g) p.coeffs[Miller{{g, 0}}] = cplx(gauss(rng), gauss(rng));
    const double eps = eps0 * (0.125 + 0.375 * u01(rng));
    const AveragingResult a = averaging_identity(p, q, eps);
    const double err = std::abs(a.lhs - a.rhs) / std::max(1.0, std::abs(a.rhs));
    worst_avg = std::max(worst_avg, err);
    if (err <= 1e-6) ++avg_ok;
  }
  return {centering_ok == 100 && lower_ok == 100 && avg_ok == 100,
          "centering " + std::to_string(centering_ok) + "/100, lower bound " + std::to_string(lower_ok) +
              "/100, averaging " + std::to_string(avg_ok) + "/100 (worst rel. error " + fmt("%.2e", worst_avg) +
              ", tol 1e-6)"};
}

Outcome criterion9() {
  double worst = 0.0, exact = 0.0;
  auto free = std::make_shared<const Crystal>(Crystal::build(make_lattice({{1.0}}), ZeroPotential{}, 4.5 * kTwoPi));
  for (double k : {0.3, -1.1, 2.0}) {
    const GroupVelocity g = group_velocity(*free, assemble_fiber(*free, vec1(k)), 0);
    worst = std::max(worst, g.discrepancy());
    exact = std::max(exact, std::abs(g.inner_product(0) - 2.0 * k));
  }
  auto cos1 = cosine_crystal();
  for (double t : {0.25, 0.1, -0.37})
    for (std::size_t b : {0u, 1u, 2u})
      worst = std::max(worst, group_velocity(*cos1, assemble_fiber(*cos1, vec1(t * kTwoPi)), b).discrepancy());
  return {worst <= 1e-6 && exact <= 1e-12, "max |inner product - finite difference| = " + fmt("%.2e", worst) +
                                               " (tol 1e-6); free |grad E - 2k| = " + fmt("%.1e", exact)};
}

Outcome criterion10() {
  const Lattice hex = hexagonal_lattice(1.0);
  auto crystal = std::make_shared<const Crystal>(Crystal::build(hex, HoneycombPotential{1.0}, 54.0));
  const RVec K = hex.from_reduced(hexagonal_vertex(hex));
  const BandStructure bs = band_structure(crystal, full_zone_grid(hex, {12, 12}), 4);
  SeparationOptions opt;
  opt.radius = 0.1 * crystal->reference_momentum();
  const DegeneracyInfo info = verify_separation(bs, K, 0, 2, opt);
  const double aniso = info.dirac ? info.dirac->fine.anisotropy : 1.0;
  const double stab = info.dirac ? info.dirac->stability : 1.0;
  const std::size_t n = crystal->size();
  const bool ok = info.kind == DegeneracyKind::Dirac && aniso < 0.05 && stab < 0.02 && n >= 150 && n <= 250;
  return {ok, std::to_string(n) + " plane waves, kind " + to_string(info.kind) + ", E* = " + fmt("%.6f", info.energy) +
                  ", v_D = " + fmt("%.5f", info.dirac ? info.dirac->fine.velocity : 0.0) + ", anisotropy " +
                  fmt("%.4f", aniso) + " (< 0.05), stability " + fmt("%.2e", stab) + " (< 0.02), margin " +
                  fmt("%.3f", info.margin)};
}

Outcome criterion11() {
  const auto checks = run_selftest(1, 1);
  int passed = 0;
  std::string failed;
  for (const auto& c : checks) {
    if (c.passed) ++passed;
    else failed += " " + c.name;
  }
  return {passed == static_cast<int>(checks.size()),
          std::to_string(passed) + "/" + std::to_string(checks.size()) + " invariant checks" +
              (failed.empty() ? "" : "; failed:" + failed)};
}

}  // namespace

int main() {
  struct Item {
    int id;
    double budget;  // seconds
    std::function<Outcome()> run;
  };
  const std::vector<Item> items{{1, 10, criterion1},  {2, 10, criterion2},  {3, 300, criterion3}, {4, 300, criterion4},
                                {5, 60, criterion5},  {6, 1, criterion6},   {7, 300, criterion7}, {8, 60, criterion8},
                                {9, 1, criterion9},   {10, 300, criterion10}, {11, 60, criterion11}};
  int failures = 0;
  for (const auto& it : items) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= it.budget;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("CRITERION %d: %s | %s | %.2fs (budget %.0fs)%s\n", it.id, pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs, it.budget, in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(items.size()) - failures, items.size());
  return failures == 0 ? 0 : 1;
}

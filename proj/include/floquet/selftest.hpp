#pragma once

// Invariant suite run by the `selftest` subcommand: PVM axioms, unitarity,
// projector identities, norm inequalities and effective-model invariants on
// two built-in crystals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/effective.hpp"
#include "floquet/evolve.hpp"
#include "floquet/lattice.hpp"
#include "floquet/spectral.hpp"
#include "floquet/wavepacket.hpp"

namespace floquet {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst observed defect (or margin, see below)
  double tolerance = 0.0;  // pass iff value <= tolerance
  int instances = 0;
};

namespace selftest_detail {

class Recorder {
 public:
  void add(const std::string& name, double value, double tol, int instances) {
    out_.push_back({name, std::isfinite(value) && value <= tol, value, tol, instances});
  }
  std::vector<CheckResult> take() { return std::move(out_); }

 private:
  std::vector<CheckResult> out_;
};

inline Arc random_arc(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  return {u(rng), u(rng)};
}

inline CVec random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CVec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
  return v;
}

/// Smallest |theta - x| over exponents, on the circle.
inline double distance_to_spectrum(const RVec& theta, double x) {
  double d = kPi;
  for (Eigen::Index i = 0; i < theta.size(); ++i) d = std::min(d, std::abs(wrap_angle(theta(i) - x)));
  return d;
}

/// Random angle at least `gap` away from every exponent.
inline double clear_angle(const RVec& theta, std::mt19937_64& rng, double gap = 1e-6) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int tries = 0; tries < 1000; ++tries) {
    const double x = u(rng);
    if (distance_to_spectrum(theta, x) > gap) return x;
  }
  throw numeric_error("selftest", "could not find an angle clear of the spectrum");
}

inline void pvm_checks(Recorder& rec, const std::string& tag, const std::vector<Monodromy>& monos,
                       std::mt19937_64& rng) {
  double unit = 0, recon = 0, full = 0, empty = 0, additive = 0, multiplicative = 0, projector = 0;
  int count = 0;
  for (const auto& m : monos) {
    const auto n = m.matrix.rows();
    unit = std::max(unit, unitarity_defect(m.matrix));
    recon = std::max(recon, (spectral_reconstruction(m) - m.matrix).norm());
    full = std::max(full, (arc_projector(m, Arc::full(clear_angle(m.exponents, rng))) - CMat::Identity(n, n)).norm());
    // an arc strictly between two adjacent exponents
    {
      RVec s = m.exponents;
      double lo = s(0), hi = s(0) + kTwoPi;  // wrap gap
      double best = hi - s(s.size() - 1);
      for (Eigen::Index i = 0; i + 1 < s.size(); ++i)
        if (s(i + 1) - s(i) > best) {
          best = s(i + 1) - s(i);
          lo = s(i);
          hi = s(i + 1);
        }
      if (s.size() == 1 || hi - s(s.size() - 1) >= best) {
        lo = s(s.size() - 1);
        hi = s(0) + kTwoPi;
      }
      const double w = hi - lo;
      const Arc gap{wrap_angle(lo + 0.25 * w), wrap_angle(lo + 0.75 * w)};
      empty = std::max(empty, arc_projector(m, gap).norm());
    }
    for (int r = 0; r < 10; ++r, ++count) {
      const double a = clear_angle(m.exponents, rng), b = clear_angle(m.exponents, rng),
                   c = clear_angle(m.exponents, rng);
      // split the arc (a, c) at the point b if b lies inside it
      const Arc whole{a, c};
      const bool inside = whole.offset(b) < whole.length();
      if (inside) {
        const CMat sum = arc_projector(m, Arc{a, b}) + arc_projector(m, Arc{b, c});
        additive = std::max(additive, (sum - arc_projector(m, whole)).norm());
      }
      const Arc i1 = random_arc(rng), i2 = random_arc(rng);
      const CMat p1 = arc_projector(m, i1), p2 = arc_projector(m, i2);
      const auto in1 = arc_membership(m.exponents, i1), in2 = arc_membership(m.exponents, i2);
      CMat both = CMat::Zero(n, n);
      for (Eigen::Index j = 0; j < n; ++j)
        if (in1[static_cast<std::size_t>(j)] && in2[static_cast<std::size_t>(j)])
          both += m.vectors.col(j) * m.vectors.col(j).adjoint();
      multiplicative = std::max(multiplicative, (p1 * p2 - both).norm());
      projector = std::max(projector, std::max((p1 * p1 - p1).norm(), (p1 - p1.adjoint()).norm()));
    }
  }
  rec.add(tag + ": unitarity |M*M - I|", unit, 1e-10, static_cast<int>(monos.size()));
  rec.add(tag + ": reconstruction sum z v v* = M", recon, 1e-10, static_cast<int>(monos.size()));
  rec.add(tag + ": Pi(S^1) = I", full, 1e-10, static_cast<int>(monos.size()));
  rec.add(tag + ": Pi(empty arc) = 0", empty, 1e-10, static_cast<int>(monos.size()));
  rec.add(tag + ": additivity over split arcs", additive, 1e-10, count);
  rec.add(tag + ": multiplicativity Pi(I1)Pi(I2) = Pi(I1 ^ I2)", multiplicative, 1e-10, count);
  rec.add(tag + ": arc projectors Hermitian idempotent", projector, 1e-10, count);
}

}  // namespace selftest_detail

/// Runs every check; deterministic for a given seed.
inline std::vector<CheckResult> run_selftest(std::uint64_t seed = 1, int threads = 1) {
  using namespace selftest_detail;
  Recorder rec;
  std::mt19937_64 rng(seed);

  // 1D cosine crystal, non-critical target, sine drive
  const Lattice lat1 = make_lattice({{1.0}});
  CosineSumPotential cos1;
  cos1.terms = {{Miller{{1, 0}}, 1.0}};  // V = 2 cos(2 pi x)
  auto c1 = std::make_shared<const Crystal>(Crystal::build(lat1, cos1, 4.5 * kTwoPi));
  RVec k1(1);
  k1 << 0.5 * kPi;
  const BandTarget t1 = make_target(*c1, k1, 0, 1);
  RVec dir1(1);
  dir1 << 1.0;
  const DrivingProfile drive1 = sine_drive(dir1, 1.0, 0.5);

  // 2D honeycomb crystal, Dirac target, circular drive
  const Lattice hex = hexagonal_lattice(1.0);
  auto c2 = std::make_shared<const Crystal>(Crystal::build(hex, HoneycombPotential{1.0}, 30.0));
  const RVec kk = hex.from_reduced(hexagonal_vertex(hex));
  const BandTarget t2 = make_target(*c2, kk, 0, 2);
  const DrivingProfile drive2 = circular_drive(0.5, 1.0);

  rec.add("lattice: duality residual (1D, hexagonal)", std::max(lat1.duality_residual(), hex.duality_residual()),
          1e-12, 2);
  {
    double herm = 0;
    for (int r = 0; r < 10; ++r) {
      std::uniform_real_distribution<double> u(-3, 3);
      RVec q(2);
      q << u(rng), u(rng);
      const CMat h = c2->hamiltonian(q);
      herm = std::max(herm, (h - h.adjoint()).norm());
    }
    rec.add("bloch: H(k) Hermitian", herm, 1e-12, 10);
  }
  {
    const FiberSystem f = assemble_fiber(*c1, k1);
    const GroupVelocity gv = group_velocity(*c1, f, 0);
    rec.add("bloch: inner-product vs finite-difference velocity", gv.discrepancy(), 1e-6, 1);
    const double e = f.energies(0);
    const double radius = 0.5 * (f.energies(1) - e);
    rec.add("bloch: Riesz projector vs eigenprojector",
            (riesz_projector(f, e, radius) - eigen_projector(f, e, radius)).norm(), 1e-8, 1);
  }

  EvolutionOptions opt1;
  opt1.energy_shift = t1.energy;
  const double eps1 = 0.1;
  auto bank1 = make_fiber_bank(c1, anchored_grid(k1, eps1, 8), threads);
  const auto monos1 = fiber_monodromies(*bank1, drive1, eps1, 500, opt1, threads);
  pvm_checks(rec, "1D driven", monos1, rng);

  EvolutionOptions opt2;
  opt2.energy_shift = t2.energy;
  const double eps2 = 0.2;
  auto bank2 = make_fiber_bank(c2, anchored_grid(kk, eps2, 3), threads);
  const auto monos2 = fiber_monodromies(*bank2, drive2, eps2, 200, opt2, threads);
  pvm_checks(rec, "2D driven", monos2, rng);

  // fiberwise spectral measure
  {
    double idem = 0, contract = 0, split = 0;
    for (int r = 0; r < 20; ++r) {
      const StateFiberRep s = random_state(bank1, rng);
      const double a = clear_angle(monos1.front().exponents, rng), b = clear_angle(monos1.front().exponents, rng);
      const Arc i1{a, b}, i2{b, a};
      const StateFiberRep p = apply_measure(s, i1, monos1);
      idem = std::max(idem, (apply_measure(p, i1, monos1) - p).norm());
      contract = std::max(contract, p.norm() - s.norm());
      split = std::max(split, (p + apply_measure(s, i2, monos1) - s).norm() / s.norm());
    }
    rec.add("spectral: apply_measure idempotent", idem, 1e-10, 20);
    rec.add("spectral: apply_measure norm-contractive (|Pu| - |u|)", contract, 1e-12, 20);
    rec.add("spectral: complementary arcs sum to identity", split, 1e-10, 20);
  }

  // centering inequality, 100 draws over both crystals
  {
    double worst = -1e300;
    std::uniform_real_distribution<double> u(0.05, kTwoPi);
    for (int r = 0; r < 100; ++r) {
      const auto& monos = r % 2 ? monos2 : monos1;
      const Monodromy& m = monos[static_cast<std::size_t>(r / 2) % monos.size()];
      std::uniform_real_distribution<double> mid(-kPi, kPi);
      const double c = mid(rng), len = u(rng);
      const Arc arc{wrap_angle(c - 0.5 * len), wrap_angle(c + 0.5 * len)};
      const CenteringResidual cr = centering_residual(m, arc, random_vector(m.matrix.rows(), rng));
      worst = std::max(worst, cr.eta - cr.bound);
    }
    rec.add("spectral: centering |eta| <= 2 sin(|I|/4) |u|", worst, 1e-10, 100);
  }

  // P0 window and BL synthesis
  {
    auto bank = make_fiber_bank(c1, anchored_grid(k1, 0.05, 17), threads);
    const WindowSpec w = window_for(t1, 0.05, 4.0);
    double idem = 0, adj = 0, contract = 0, normid = 0;
    for (int r = 0; r < 20; ++r) {
      const StateFiberRep x = random_state(bank, rng), y = random_state(bank, rng);
      const StateFiberRep px = project_p0(x, w);
      idem = std::max(idem, (project_p0(px, w) - px).norm());
      adj = std::max(adj, std::abs(px.inner(y) - x.inner(project_p0(y, w))));
      contract = std::max(contract, px.norm() - x.norm());
      const Envelope like = envelope_on_grid(bank->grid, 1.0, 1, [](const RVec&) { return CVec::Ones(1).eval(); });
      const Envelope env = random_envelope(like, rng);
      normid = std::max(normid, std::abs(synthesize_bl(env, t1, bank).norm() - env.norm()));
    }
    rec.add("wavepacket: P0 idempotent", idem, 1e-12, 20);
    rec.add("wavepacket: P0 self-adjoint", adj, 1e-10, 20);
    rec.add("wavepacket: P0 norm-contractive", contract, 1e-12, 20);
    rec.add("wavepacket: |synthesize_bl(alpha)| = |alpha|", normid, 1e-10, 20);
  }

  // effective models
  {
    const EffectiveModel tr = transport_model(RVec::Constant(1, -0.5));
    const EffectiveModel dirac = dirac_model(1.0);
    const EffectiveModel msch = matrix_schrodinger_model(0.7, 0.4, 0.3);
    const DrivingProfile circ = circular_drive(1.0, kTwoPi);
    RVec d1(1);
    d1 << 1.0;
    const DrivingProfile none1 = DrivingProfile::none(1, kTwoPi);
    std::vector<DrivingProfile> drives1{sine_drive(d1, 1.3, kTwoPi), cosine_drive(d1, 0.4, kTwoPi)};
    {
      DrivingProfile two(1, kTwoPi);
      CVec a(1);
      a << cplx(0.3, -0.2);
      two.set_harmonic(2, a);
      a << cplx(0.1, 0.5);
      two.set_harmonic(1, a);
      drives1.push_back(two);
    }
    double unit = 0, pair = 0, indep = 0;
    EffectivePropagatorOptions eo;
    eo.n_steps = 400;
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int r = 0; r < 20; ++r) {
      RVec x1(1), x2(2);
      x1 << u(rng);
      x2 << u(rng), u(rng);
      const CMat m0 = effective_multiplier(tr, x1, none1, eo);
      for (const auto& d : drives1) indep = std::max(indep, (effective_multiplier(tr, x1, d, eo) - m0).norm());
      for (const auto* model : {&dirac, &msch}) {
        const CMat m = effective_multiplier(*model, x2, circ, eo);
        unit = std::max(unit, unitarity_defect(m));
        const RVec th = unitary_exponents(effective_traceless_propagator(*model, x2, circ, kTwoPi, eo));
        pair = std::max(pair, std::abs(wrap_angle(th.sum())));
      }
      unit = std::max(unit, unitarity_defect(m0));
    }
    rec.add("effective: multipliers unitary", unit, 1e-10, 60);
    rec.add("effective: traceless factors have conjugate exponent pairs", pair, 1e-10, 40);
    rec.add("effective: transport multiplier drive-independent", indep, 1e-12, 60);

    // centering lower bound on random envelopes
    double worst = -1e300;
    const Envelope base1 = envelope_on_ball(1, 0.25, 16, 1, [](const RVec&) { return CVec::Ones(1).eval(); });
    const Envelope base2 = envelope_on_ball(2, 0.2, 8, 2, [](const RVec&) { return CVec::Ones(2).eval(); });
    const SpectralEnclosure e1 = effective_monodromy_bound(tr, 0.25, none1);
    const SpectralEnclosure e2 = effective_monodromy_bound(dirac, 0.2, circ, 12, eo);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    for (int r = 0; r < 100; ++r) {
      const bool two = r % 2;
      const double g0 = two ? e2.g0 : e1.g0;
      const double nu0 = g0 + (kPi - g0) * (0.01 + 0.99 * frac(rng));
      const LowerBound lb = two ? lower_bound_check(dirac, nu0, g0, random_envelope(base2, rng), circ, eo)
                                : lower_bound_check(tr, nu0, g0, random_envelope(base1, rng), drives1[0], eo);
      worst = std::max(worst, lb.rhs - lb.lhs);
    }
    rec.add("effective: lower bound |(e^{-i nu0} - M_eff) f| >= 2 sin((nu0 - g0)/2) |f|", worst, 1e-10, 100);
  }
  return rec.take();
}

inline bool all_passed(const std::vector<CheckResult>& r) {
  return std::all_of(r.begin(), r.end(), [](const CheckResult& c) { return c.passed; });
}

}  // namespace floquet

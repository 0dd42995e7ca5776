#include <gtest/gtest.h>

#include <random>

#include "floquet/spectral.hpp"
#include "support.hpp"

using namespace floquet;
using namespace floquet::testing;

namespace {

// Unitary with prescribed exponents in a random orthonormal basis.
Monodromy synthetic(const std::vector<double>& theta, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(theta.size());
  std::normal_distribution<double> g;
  CMat a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = {g(rng), g(rng)};
  const CMat q = Eigen::HouseholderQR<CMat>(a).householderQ();
  CVec z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = std::exp(-kI * theta[static_cast<std::size_t>(i)]);
  Monodromy m;
  m.k = vec(0.0);
  m.period = 1.0;
  m.matrix = q * z.asDiagonal() * q.adjoint();
  decompose_unitary(m);
  return m;
}

CVec random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CVec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = {g(rng), g(rng)};
  return v;
}

}  // namespace

TEST(Arc, LengthMidpointAndWrap) {
  EXPECT_NEAR(Arc::symmetric(0.5).length(), 1.0, 1e-15);
  EXPECT_NEAR(Arc::symmetric(0.5).midpoint(), 0.0, 1e-15);
  const Arc wrap{3.0, -3.0};
  EXPECT_NEAR(wrap.length(), kTwoPi - 6.0, 1e-14);
  EXPECT_NEAR(std::abs(wrap.midpoint()), kPi, 1e-14);
  EXPECT_NEAR(Arc::full().length(), kTwoPi, 1e-15);
  EXPECT_NEAR(Arc::symmetric(0.5).complement().length(), kTwoPi - 1.0, 1e-14);
  RVec th(4);
  th << -3.1, -0.2, 0.4, 3.1;
  const auto in = arc_membership(th, wrap);
  EXPECT_TRUE(in[0]);
  EXPECT_FALSE(in[1]);
  EXPECT_FALSE(in[2]);
  EXPECT_TRUE(in[3]);
}

TEST(Arc, BoundaryExponentCountsInsideWithWarning) {
  RVec th(1);
  th << 0.5;
  std::vector<std::string> w;
  EXPECT_TRUE(arc_membership(th, Arc::symmetric(0.5), &w)[0]);
  EXPECT_EQ(w.size(), 1u);
}

TEST(Projector, PvmAxiomsOnRandomArcs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  std::vector<double> theta;
  for (int i = 0; i < 12; ++i) theta.push_back(u(rng));
  const Monodromy m = synthetic(theta, rng);
  const CMat id = CMat::Identity(12, 12);
  EXPECT_LT((spectral_reconstruction(m) - m.matrix).norm(), 1e-10);
  EXPECT_LT((m.vectors.adjoint() * m.vectors - id).norm(), 1e-12);
  for (int trial = 0; trial < 50; ++trial) {
    double a = u(rng), b = u(rng), c = u(rng);
    if (a > b) std::swap(a, b);
    const Arc i1{a, b};
    const CMat p1 = arc_projector(m, i1);
    EXPECT_LT((p1 * p1 - p1).norm(), 1e-10);
    EXPECT_LT((p1 - p1.adjoint()).norm(), 1e-10);
    EXPECT_LT((p1 + arc_projector(m, i1.complement()) - id).norm(), 1e-10);
    // (a, b) intersected with (a, c) is (a, min(b, c)) when c > a
    if (c > a) {
      const CMat p2 = arc_projector(m, Arc{a, c});
      EXPECT_LT((p1 * p2 - arc_projector(m, Arc{a, std::min(b, c)})).norm(), 1e-10);
    }
  }
  // the full circle minus a point that misses every exponent
  EXPECT_LT((arc_projector(m, Arc::full(theta[0] + 1e-3)) - id).norm(), 1e-10);
}

TEST(Projector, EmptyArcGivesZero) {
  std::mt19937_64 rng(5);
  const Monodromy m = synthetic({-2.0, -1.0, 1.0, 2.0}, rng);
  EXPECT_LT(arc_projector(m, Arc{-0.5, 0.5}).norm(), 1e-15);
  EXPECT_NEAR(arc_projector(m, Arc{0.5, 1.5}).trace().real(), 1.0, 1e-12);
}

TEST(Projector, UndrivenArcMatchesEnergyEnumeration) {
  auto c = cosine_crystal();
  const FiberSystem f = assemble_fiber(*c, vec(0.6));
  const double tp = 0.05;  // T_per eps^-a
  const Monodromy m = monodromy(*c, f, DrivingProfile::none(1, tp * 0.1), 0.1, 1);
  const Arc arc = Arc::symmetric(1.5);
  int inside = 0;
  for (Eigen::Index b = 0; b < f.energies.size(); ++b)
    if (std::abs(wrap_angle(f.energies(b) * tp)) < 1.5) ++inside;
  const CMat p = arc_projector(m, arc);
  EXPECT_NEAR(p.trace().real(), inside, 1e-10);
  CMat want = CMat::Zero(9, 9);
  for (Eigen::Index b = 0; b < f.energies.size(); ++b)
    if (std::abs(wrap_angle(f.energies(b) * tp)) < 1.5) want += f.vectors.col(b) * f.vectors.col(b).adjoint();
  EXPECT_LT((p - want).norm(), 1e-10);
}

TEST(Centering, EigenvectorAtMidpointHasNoResidual) {
  std::mt19937_64 rng(9);
  const Monodromy m = synthetic({-1.0, 0.3, 2.0}, rng);
  const CVec v = m.vectors.col(1);
  const CenteringResidual r = centering_residual(m, Arc{0.1, 0.5}, v);
  EXPECT_LT(r.eta, 1e-12);
}

TEST(Centering, TwoPointSpectrumAttainsBound) {
  const double g = 0.7;
  Monodromy m;
  m.k = vec(0.0);
  m.matrix = CMat::Zero(2, 2);
  m.matrix(0, 0) = std::exp(-kI * g);
  m.matrix(1, 1) = std::exp(kI * g);
  decompose_unitary(m);
  CVec u(2);
  u << 1.0, 1.0;
  const CenteringResidual r = centering_residual(m, Arc::symmetric(g), u);
  EXPECT_NEAR(r.eta, std::abs(std::exp(-kI * g) - 1.0) * u.norm(), 1e-12);
  EXPECT_NEAR(r.bound, 2 * std::sin(g / 2) * u.norm(), 1e-12);
}

TEST(Centering, RandomDrivenFibers) {
  auto c = cosine_crystal();
  const DrivingProfile a = sine_drive(vec(1.0), 1.0, 0.5);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int trial = 0; trial < 20; ++trial) {
    const Monodromy m = monodromy(*c, assemble_fiber(*c, vec(u(rng) / 2)), a, 0.1, 128);
    for (int draw = 0; draw < 5; ++draw) {
      double lo = u(rng), hi = u(rng);
      const CenteringResidual r = centering_residual(m, Arc{lo, hi}, random_vector(9, rng));
      EXPECT_LE(r.eta, r.bound + 1e-10);
    }
  }
}

class Measure : public ::testing::Test {
 protected:
  void SetUp() override {
    crystal = cosine_crystal();
    bank = make_fiber_bank(crystal, full_zone_grid(crystal->lattice(), {8}));
    monos = fiber_monodromies(*bank, sine_drive(vec(1.0), 1.0, 0.5), 0.1, 128);
    state = StateFiberRep::zero(bank);
    std::mt19937_64 rng(4);
    for (auto& x : state.coeffs) x = random_vector(x.size(), rng);
  }
  std::shared_ptr<const Crystal> crystal;
  std::shared_ptr<const FiberBank> bank;
  std::vector<Monodromy> monos;
  StateFiberRep state;
};

TEST_F(Measure, FullCircleIsIdentity) {
  EXPECT_LT((apply_measure(state, Arc::full(kPi - 1e-7), monos) - state).norm(), 1e-10 * state.norm());
}

TEST_F(Measure, ComplementaryArcsAddUp) {
  const Arc arc{-0.8, 1.9};
  const StateFiberRep sum = apply_measure(state, arc, monos) + apply_measure(state, arc.complement(), monos);
  EXPECT_LT((sum - state).norm(), 1e-10 * state.norm());
}

TEST_F(Measure, IdempotentAndContractive) {
  const Arc arc{-0.8, 1.9};
  const StateFiberRep once = apply_measure(state, arc, monos);
  EXPECT_LT((apply_measure(once, arc, monos) - once).norm(), 1e-10 * state.norm());
  EXPECT_LE(once.norm(), state.norm() * (1 + 1e-12));
}

TEST_F(Measure, GridMismatchRejected) {
  auto other = make_fiber_bank(crystal, full_zone_grid(crystal->lattice(), {7}));
  auto wrong = fiber_monodromies(*other, sine_drive(vec(1.0), 1.0, 0.5), 0.1, 64);
  try {
    apply_measure(state, Arc{-1, 1}, wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "grid_mismatch");
  }
}

TEST(MeasureUndriven, LowBandInsideArcIsUnchanged) {
  auto c = cosine_crystal();
  auto bank = make_fiber_bank(c, full_zone_grid(c->lattice(), {8}));
  // fast period 0.05: the lowest band stays below E T = 0.5, the second straddles the arc edge
  const auto monos = fiber_monodromies(*bank, DrivingProfile::none(1, 0.005), 0.1, 1);
  StateFiberRep s = StateFiberRep::zero(bank);
  for (auto& x : s.coeffs) x(0) = 1.0;
  EXPECT_LT((apply_measure(s, Arc::symmetric(0.9), monos) - s).norm(), 1e-12);
  StateFiberRep t = StateFiberRep::zero(bank);
  for (auto& x : t.coeffs) x(1) = 1.0;
  const StateFiberRep pt = apply_measure(t, Arc::symmetric(0.9), monos);
  int kept = 0;
  for (std::size_t j = 0; j < bank->size(); ++j) {
    const bool inside = std::abs(bank->fibers[j].energies(1) * 0.05) < 0.9;
    kept += inside;
    EXPECT_LT((pt.coeffs[j] - (inside ? t.coeffs[j] : CVec::Zero(9))).norm(), 1e-12) << "fiber " << j;
  }
  EXPECT_GT(kept, 0);
  EXPECT_LT(kept, 8);
}

TEST(StateRep, NormUsesWeights) {
  auto c = free_crystal();
  auto bank = make_fiber_bank(c, full_zone_grid(c->lattice(), {4}));
  StateFiberRep s = StateFiberRep::zero(bank);
  for (auto& x : s.coeffs) x(0) = 1.0;
  EXPECT_NEAR(s.squared_norm(), kTwoPi, 1e-12);
  EXPECT_NEAR(std::abs(s.inner(s)), kTwoPi, 1e-12);
  CVec pw = s.plane_wave(2);
  StateFiberRep t = StateFiberRep::zero(bank);
  t.set_plane_wave(2, pw);
  EXPECT_LT((t.coeffs[2] - s.coeffs[2]).norm(), 1e-14);
}

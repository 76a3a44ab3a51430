#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "flavent/error.hpp"
#include "flavent/models.hpp"

using namespace flavent;

namespace {

const ModelParams kFig1{0.507, 1.53, 0.0};

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST(RateQm, ValuesAtZero) {
  EXPECT_NEAR(rate_qm(0.0, FlavourClass::OF, kFig1), 1.0 / (2 * 1.53), 1e-12);
  EXPECT_DOUBLE_EQ(rate_qm(0.0, FlavourClass::SF, kFig1), 0.0);
}

TEST(RateQm, NormalizesToOne) {
  auto sum = [](double dt) {
    return rate_qm(dt, FlavourClass::OF, kFig1) + rate_qm(dt, FlavourClass::SF, kFig1);
  };
  EXPECT_NEAR(2.0 * simpson(sum, 0.0, 40 * 1.53, 20000), 1.0, 1e-9);
}

TEST(AsymQm, Oracles) {
  EXPECT_DOUBLE_EQ(asym_qm(0.0, kFig1), 1.0);
  EXPECT_NEAR(asym_qm(std::numbers::pi / 0.507, kFig1), -1.0, 1e-15);
  const double of = rate_qm(3.0, FlavourClass::OF, kFig1);
  const double sf = rate_qm(3.0, FlavourClass::SF, kFig1);
  EXPECT_NEAR(asym_qm(3.0, kFig1), std::cos(1.521), 1e-15);
  EXPECT_NEAR(asym_qm(3.0, kFig1), (of - sf) / (of + sf), 1e-14);
}

TEST(AsymQm, RateRatioOnGrid) {
  for (double dt = 0.05; dt < 30; dt += 0.37) {
    const double of = rate_qm(dt, FlavourClass::OF, kFig1);
    const double sf = rate_qm(dt, FlavourClass::SF, kFig1);
    EXPECT_NEAR(asym_qm(dt, kFig1), (of - sf) / (of + sf), 1e-12) << dt;
  }
}

TEST(AsymSdJoint, Oracles) {
  EXPECT_DOUBLE_EQ(asym_sd_joint(0, 0, kFig1), 1.0);
  EXPECT_NEAR(asym_sd_joint(std::numbers::pi / 0.507, 0, kFig1), -1.0, 1e-15);
  const double t1 = 1.2, t2 = 3.4, w = 0.507;
  const double sum_form = 0.5 * (std::cos(w * (t1 - t2)) + std::cos(w * (t1 + t2)));
  EXPECT_NEAR(asym_sd_joint(t1, t2, kFig1), sum_form, 1e-12);
}

TEST(Marginalize, ConstantIsPreserved) {
  for (double c : {-0.7, 0.0, 0.3, 1.0})
    EXPECT_NEAR(marginalize([c](double, double) { return c; }, 2.5, kFig1), c, 1e-12);
}

TEST(Marginalize, LaplaceOracle) {
  const double x = 0.507 * 1.53;
  for (double dt : {0.0, 0.7, 3.1, 9.0}) {
    const double got =
        marginalize([](double u, double d) { return std::cos(0.507 * (d + 2 * u)); }, dt, kFig1);
    const double want = (std::cos(0.507 * dt) - x * std::sin(0.507 * dt)) / (1 + x * x);
    EXPECT_NEAR(got, want, 1e-10) << dt;
  }
}

TEST(AsymSdMarginal, ValueAtZero) {
  const double x = 0.507 * 1.53;
  EXPECT_NEAR(asym_sd_marginal(0.0, kFig1), 0.5 * (1 + 1 / (1 + x * x)), 1e-15);
  EXPECT_NEAR(asym_sd_marginal(0.0, kFig1), 0.8122, 5e-5);
}

TEST(AsymSdMarginal, ClosedFormMatchesQuadrature) {
  auto joint = [](double u, double dt) { return asym_sd_joint(u, u + dt, kFig1); };
  for (int i = 0; i <= 200; ++i) {
    const double dt = 0.1 * i;
    EXPECT_NEAR(asym_sd_marginal(dt, kFig1), marginalize(joint, dt, kFig1), 1e-9) << dt;
  }
}

TEST(AsymSdMarginal, AmplitudeBound) {
  const double x = 0.507 * 1.53;
  const double bound = 0.5 * (1 + 1 / std::sqrt(1 + x * x));
  for (double dt = 5; dt < 200; dt += 0.13) EXPECT_LE(std::abs(asym_sd_marginal(dt, kFig1)), bound + 1e-12);
}

TEST(PsBoundsJoint, Oracles) {
  for (double t : {0.0, 0.4, 3.0}) EXPECT_NEAR(ps_bounds_joint(t, 0.0, kFig1).upper, 1.0, 1e-15);
  const auto b = ps_bounds_joint(0.0, 0.0, kFig1);
  EXPECT_NEAR(b.lower, 1.0, 1e-15);
}

TEST(PsBoundsJoint, MinIdentityOnRandomPoints) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 10000; ++i) {
    const double psi = 4 * (u(rng) / 10 - 1);
    EXPECT_NEAR(std::min(2 + psi, 2 - psi), 2 - std::abs(psi), 1e-14);
    const auto b = ps_bounds_joint(u(rng), u(rng), kFig1);
    EXPECT_LE(b.lower, b.upper + 1e-14);
    EXPECT_GE(b.lower, -1 - 1e-14);
    EXPECT_LE(b.upper, 1 + 1e-14);
  }
}

TEST(PsBoundsMarginal, ClosedFormMatchesQuadrature) {
  for (double dt = 0.0; dt <= 20.0; dt += 0.5) {
    const auto q = ps_bounds_marginal(dt, kFig1);
    const auto c = ps_bounds_marginal_closed(dt, kFig1);
    EXPECT_NEAR(q.lower, c.lower, 1e-9) << dt;
    EXPECT_NEAR(q.upper, c.upper, 1e-9) << dt;
  }
}

TEST(PsBoundsMarginal, LowerAtZeroIsWeightedAbsCos) {
  const double k = 2 / 1.53;
  auto f = [&](double u) { return k * std::exp(-k * u) * (2 * std::abs(std::cos(0.507 * u)) - 1); };
  const double want = simpson(f, 0, 40 * 1.53, 200000);
  EXPECT_NEAR(ps_bounds_marginal_closed(0, kFig1).lower, want, 1e-8);
  EXPECT_NEAR(ps_bounds_marginal_closed(0, kFig1).upper, 1.0, 1e-12);
}

TEST(Curves, StayInRangeAndOrdered) {
  for (double dt = 0; dt <= 20; dt += 0.05) {
    const auto b = ps_bounds_marginal_closed(dt, kFig1);
    EXPECT_LE(b.lower, b.upper);
    EXPECT_GE(b.lower, -1.0);
    EXPECT_LE(b.upper, 1.0);
    EXPECT_LE(std::abs(asym_sd_marginal(dt, kFig1)), 1.0);
  }
}

TEST(Curves, QmLeavesBandSomewhere) {
  int outside = 0;
  for (double dt = 0; dt <= 20; dt += 0.1) {
    const auto b = ps_bounds_marginal_closed(dt, kFig1);
    const double a = asym_qm(dt, kFig1);
    outside += (a < b.lower || a > b.upper);
  }
  EXPECT_GT(outside, 0);
}

TEST(AsymDecohered, Limits) {
  ModelParams p = kFig1;
  for (double dt : {0.0, 1.1, 4.0}) {
    p.zeta = 0;
    EXPECT_DOUBLE_EQ(asym_decohered(dt, p), asym_qm(dt, p));
    p.zeta = 1;
    EXPECT_NEAR(asym_decohered(dt, p), asym_sd_marginal(dt, p), 1e-15);
  }
  p.zeta = 0.029;
  EXPECT_NEAR(asym_decohered(0.0, p), 0.971 + 0.029 * asym_sd_marginal(0, p), 1e-15);
  EXPECT_NEAR(asym_decohered(0.0, p), 0.99455, 5e-6);
}

TEST(ModelParams, Validation) {
  EXPECT_THROW((ModelParams{-1, 1.53, 0}).validate(), ValidationError);
  EXPECT_THROW((ModelParams{0.5, 0, 0}).validate(), ValidationError);
  EXPECT_THROW((ModelParams{0.5, 1.5, 1.5}).validate(), ValidationError);
  EXPECT_NO_THROW(kFig1.validate());
}

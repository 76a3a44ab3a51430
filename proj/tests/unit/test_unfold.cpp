#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "flavent/error.hpp"
#include "flavent/rng.hpp"
#include "flavent/toygen.hpp"
#include "flavent/unfold.hpp"

using namespace flavent;

namespace {

// Banded migration with 5% inefficiency and a falling a-priori spectrum.
ResponseMatrix synthetic(FlavourClass cls, double spread, std::uint64_t seed) {
  const Binning b;
  const Eigen::Index n = 11;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.8, 1.2);
  ResponseMatrix r;
  r.cls = cls;
  r.binning = b;
  r.truth_totals.resize(n);
  r.counts = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index g = 0; g < n; ++g) {
    r.truth_totals(g) = 20000.0 * std::exp(-0.3 * static_cast<double>(g)) * u(rng);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double d = static_cast<double>(k - g);
      col(k) = std::exp(-0.5 * d * d / (spread * spread)) * u(rng);
    }
    col *= 0.95 / col.sum();
    r.counts.col(g) = col * r.truth_totals(g);
  }
  return r;
}

// Same migration as `r` with a different a-priori spectrum.
ResponseMatrix sibling(const ResponseMatrix& r, FlavourClass cls, double tilt) {
  ResponseMatrix out = r;
  out.cls = cls;
  for (Eigen::Index g = 0; g < r.counts.cols(); ++g) {
    const double f = std::exp(tilt * static_cast<double>(g));
    out.truth_totals(g) *= f;
    out.counts.col(g) *= f;
  }
  return out;
}

BinnedCounts fold(const ResponseMatrix& of, const ResponseMatrix& sf, const Eigen::VectorXd& xo,
                  const Eigen::VectorXd& xs) {
  BinnedCounts c = BinnedCounts::zeros(of.binning);
  const Eigen::VectorXd yo = of.migration() * xo;
  const Eigen::VectorXd ys = sf.migration() * xs;
  for (Eigen::Index i = 0; i < yo.size(); ++i) {
    c.n_of[i] = c.var_of[i] = yo(i);
    c.n_sf[i] = c.var_sf[i] = ys(i);
  }
  return c;
}

Eigen::VectorXd positive_vector(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(5.0, 3000.0);
  Eigen::VectorXd x(11);
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST(Response, ZeroSmearingIsDiagonal) {
  GenerationRequest req;
  req.signal_events = 5000;
  req.seed = 2;
  req.detector = {0.0, 0.0, 0.0};
  req.with_backgrounds = false;
  const auto [of, sf] = build_response(generate_events(req), Binning{});
  for (const auto* r : {&of, &sf}) {
    const Eigen::MatrixXd off = r->counts - Eigen::MatrixXd(r->counts.diagonal().asDiagonal());
    EXPECT_EQ(off.cwiseAbs().sum(), 0.0);
    const Eigen::VectorXd eff = r->efficiency();
    for (Eigen::Index g = 0; g < eff.size(); ++g)
      if (r->truth_totals(g) > 0) EXPECT_NEAR(eff(g), 1.0, 1e-12);
  }
}

TEST(Response, NominalSmearingIsDiagonallyDominantNearZero) {
  GenerationRequest req;
  req.signal_events = 100000;
  req.seed = 3;
  req.detector = DetectorConfig{};
  req.with_backgrounds = false;
  const auto [of, sf] = build_response(generate_events(req), Binning{});
  const Eigen::MatrixXd m = of.migration();
  for (Eigen::Index g = 0; g < 11; ++g) {
    Eigen::Index arg;
    m.col(g).maxCoeff(&arg);
    EXPECT_LE(std::abs(arg - g), 1) << g;
  }
  EXPECT_GT(m(1, 0), 0.05);  // neighbour migration in the 0.5 ps bins
}

TEST(Response, MigrationInvariantUnderStatistics) {
  const ResponseMatrix r = synthetic(FlavourClass::OF, 1.0, 1);
  ResponseMatrix d = r;
  d.counts *= 2;
  d.truth_totals *= 2;
  EXPECT_LT((d.migration() - r.migration()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Response, ValidationRejectsEfficiencyAboveOne) {
  ResponseMatrix r = synthetic(FlavourClass::OF, 1.0, 1);
  r.truth_totals(3) *= 0.5;
  EXPECT_THROW(r.validate(), ValidationError);
}

TEST(Mixing, ZeroIsIdentity) {
  BinnedCounts c = BinnedCounts::zeros(Binning{});
  c.n_of = c.var_of = std::vector<double>(11, 7.0);
  c.n_sf = c.var_sf = std::vector<double>(11, 3.0);
  const auto m = mix_samples(c, {5, 6, 0.0, 0.0});
  EXPECT_EQ(m.n_of, c.n_of);
  EXPECT_EQ(m.n_sf, c.n_sf);
}

TEST(Mixing, Definition) {
  BinnedCounts c = BinnedCounts::zeros(Binning{});
  c.n_of = c.var_of = std::vector<double>(11, 100.0);
  c.n_sf = c.var_sf = std::vector<double>(11, 2.0);
  const auto m = mix_samples(c, UnfoldConfig{});
  EXPECT_DOUBLE_EQ(m.n_sf[0], 2.0 + 0.2 * 100.0);
  EXPECT_DOUBLE_EQ(m.n_of[0], 100.0 + 0.2 * 2.0);
}

TEST(Mixing, DemixIsExactInverse) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1e4);
  for (double s : {0.0, 0.2, 0.5, 0.9}) {
    BinnedCounts c = BinnedCounts::zeros(Binning{});
    for (std::size_t i = 0; i < 11; ++i) {
      c.n_of[i] = c.var_of[i] = u(rng);
      c.n_sf[i] = c.var_sf[i] = u(rng);
    }
    const UnfoldConfig cfg{5, 6, s, 0.3};
    const auto back = demix_samples(mix_samples(c, cfg), cfg);
    for (std::size_t i = 0; i < 11; ++i) {
      EXPECT_NEAR(back.n_of[i], c.n_of[i], 1e-12 * 1e4);
      EXPECT_NEAR(back.n_sf[i], c.n_sf[i], 1e-12 * 1e4);
      EXPECT_NEAR(back.var_of[i], c.var_of[i], 1e-12 * 1e4);
      EXPECT_NEAR(back.cov[i], 0.0, 1e-12 * 1e4);
    }
  }
}

TEST(Mixing, SingularMixingRejected) {
  EXPECT_THROW(demix_samples(BinnedCounts::zeros(Binning{}), UnfoldConfig{5, 6, 1.0, 1.0}),
               ValidationError);
}

TEST(Unfold, IdentityResponseFullRank) {
  ResponseMatrix id;
  id.binning = Binning{};
  id.counts = Eigen::MatrixXd::Identity(11, 11) * 1000.0;
  id.truth_totals = Eigen::VectorXd::Constant(11, 1000.0);
  ResponseMatrix sf = id;
  sf.cls = FlavourClass::SF;
  const BinnedCounts in = fold(id, sf, positive_vector(1), positive_vector(2));
  const auto r = dsvd_unfold(in, id, sf, {11, 11, 0.2, 0.2});
  for (std::size_t i = 0; i < 11; ++i) {
    EXPECT_NEAR(r.truth.n_of[i], in.n_of[i], 1e-8 * in.n_of[i]);
    EXPECT_NEAR(r.truth.n_sf[i], in.n_sf[i], 1e-8 * in.n_sf[i]);
  }
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(22, 22);
  for (Eigen::Index i = 0; i < 11; ++i) {
    want(i, i) = in.var_of[static_cast<std::size_t>(i)];
    want(11 + i, 11 + i) = in.var_sf[static_cast<std::size_t>(i)];
  }
  EXPECT_LT((r.covariance - want).cwiseAbs().maxCoeff(), 1e-8 * want.maxCoeff());
}

class NoiselessClosure : public ::testing::TestWithParam<Regularization> {};

TEST_P(NoiselessClosure, FullRankRecoversTruth) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ResponseMatrix of = synthetic(FlavourClass::OF, 0.8, seed);
    const ResponseMatrix sf = sibling(of, FlavourClass::SF, 0.1);
    const Eigen::VectorXd xo = positive_vector(seed), xs = positive_vector(seed + 50);
    UnfoldConfig cfg{11, 11, 0.2, 0.2, GetParam()};
    const auto r = dsvd_unfold(fold(of, sf, xo, xs), of, sf, cfg);
    for (Eigen::Index i = 0; i < 11; ++i) {
      EXPECT_NEAR(r.truth.n_of[static_cast<std::size_t>(i)], xo(i), 1e-8 * xo(i));
      EXPECT_NEAR(r.truth.n_sf[static_cast<std::size_t>(i)], xs(i), 1e-8 * xs(i));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Regularizations, NoiselessClosure,
                         ::testing::Values(Regularization::Plain, Regularization::Curvature));

TEST(Unfold, AprioriReproducedAtAnyRank) {
  const ResponseMatrix of = synthetic(FlavourClass::OF, 1.2, 5);
  const ResponseMatrix sf = synthetic(FlavourClass::SF, 1.2, 6);
  const Eigen::VectorXd xo = 0.3 * of.truth_totals;
  const Eigen::VectorXd xs = 0.3 * sf.truth_totals;
  for (int k = 1; k <= 11; ++k) {
    const auto r = dsvd_unfold(fold(of, sf, xo, xs), of, sf, {k, k, 0.0, 0.0});
    for (Eigen::Index i = 0; i < 11; ++i)
      EXPECT_NEAR(r.truth.n_of[static_cast<std::size_t>(i)], xo(i), 1e-8 * xo(i)) << k;
  }
}

TEST(Unfold, ResidualNonIncreasingInRank) {
  const ResponseMatrix r = synthetic(FlavourClass::OF, 1.5, 7);
  std::mt19937_64 rng(8);
  for (auto reg : {Regularization::Plain, Regularization::Curvature}) {
    Eigen::VectorXd b = r.migration() * positive_vector(9);
    for (auto& v : b) v = std::poisson_distribution<int>(v)(rng);
    double prev = INFINITY;
    for (int k = 1; k <= 11; ++k) {
      const double res = svd_unfold(b, b, r, k, reg).weighted_residual;
      EXPECT_LE(res, prev * (1 + 1e-10) + 1e-10) << k;
      prev = res;
    }
    EXPECT_NEAR(prev, 0.0, 1e-8);
  }
}

TEST(Unfold, CovarianceSymmetricPsd) {
  const ResponseMatrix of = synthetic(FlavourClass::OF, 1.0, 11);
  const ResponseMatrix sf = synthetic(FlavourClass::SF, 1.0, 12);
  for (int k : {3, 5, 6, 11}) {
    const auto r = dsvd_unfold(fold(of, sf, positive_vector(3), positive_vector(4)), of, sf,
                               {k, k, 0.2, 0.2});
    EXPECT_LT((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.covariance);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * es.eigenvalues().maxCoeff()) << k;
  }
}

TEST(Unfold, RankBeyondNumericalRankIsNumericalError) {
  ResponseMatrix r = synthetic(FlavourClass::OF, 1.0, 1);
  r.counts.col(4) = r.counts.col(3) * (r.truth_totals(4) / r.truth_totals(3));
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(11, 100.0);
  EXPECT_THROW(svd_unfold(b, b, r, 11, Regularization::Plain), NumericalError);
  EXPECT_THROW(svd_unfold(b, b, r, 12), ValidationError);
}

TEST(Unfold, ConfigValidation) {
  EXPECT_THROW((UnfoldConfig{0, 6, 0.2, 0.2}).validate(11), ValidationError);
  EXPECT_THROW((UnfoldConfig{5, 12, 0.2, 0.2}).validate(11), ValidationError);
  EXPECT_THROW((UnfoldConfig{5, 6, -0.1, 0.2}).validate(11), ValidationError);
  EXPECT_NO_THROW(UnfoldConfig{}.validate(11));
}

TEST(UnfoldedAsymmetry, ErrorsFromCovariance) {
  const ResponseMatrix of = synthetic(FlavourClass::OF, 1.0, 21);
  const ResponseMatrix sf = synthetic(FlavourClass::SF, 1.0, 22);
  const auto r = dsvd_unfold(fold(of, sf, positive_vector(5), positive_vector(6)), of, sf, {});
  const auto s = unfolded_asymmetry(r);
  ASSERT_TRUE(s.stat_cov.has_value());
  for (std::size_t i = 0; i < 11; ++i) {
    const double o = r.truth.n_of[i], f = r.truth.n_sf[i];
    EXPECT_NEAR(s.a[i], (o - f) / (o + f), 1e-14);
    EXPECT_NEAR(s.stat_err[i] * s.stat_err[i], (*s.stat_cov)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), 1e-14);
  }
}

TEST(BiasCorrect, UnbiasedGivesZero) {
  std::vector<ModelEnsemble> e;
  for (const char* m : {"QM", "SD", "PS"}) e.push_back({m, {0.5, 0.1}, {{0.49, 0.11}, {0.51, 0.09}}});
  const auto b = bias_correct(e, 2);
  for (double c : b.correction) EXPECT_NEAR(c, 0.0, 1e-15);
  for (double s : b.systematic) EXPECT_NEAR(s, 0.0, 1e-15);
}

TEST(BiasCorrect, RecoversInjectedShift) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.05);
  const double shift[] = {0.03, -0.02};
  std::vector<ModelEnsemble> e;
  for (double truth0 : {0.9, 0.7, 0.8}) {
    ModelEnsemble m{"M", {truth0, -0.2}, {}};
    for (int r = 0; r < 300; ++r)
      m.unfolded.push_back({truth0 + shift[0] + g(rng), -0.2 + shift[1] + g(rng)});
    e.push_back(m);
  }
  const auto b = bias_correct(e, 300);
  const double err = 0.05 / std::sqrt(900.0);
  EXPECT_NEAR(b.correction[0], shift[0], 4 * err);
  EXPECT_NEAR(b.correction[1], shift[1], 4 * err);
  EXPECT_THROW(bias_correct(std::span(e).first(2), 1), ValidationError);
  EXPECT_THROW(bias_correct(e, 301), ValidationError);
}

TEST(SmearVariants, Arithmetic) {
  const DetectorConfig d{};
  const auto [up, down] = smear_variants(d, 35.0, SmearVariation::Quadrature);
  EXPECT_DOUBLE_EQ(up.extra_smear_sigma, std::sqrt(46.0 * 46 + 35 * 35));
  EXPECT_DOUBLE_EQ(down.extra_smear_sigma, std::sqrt(46.0 * 46 - 35 * 35));
  EXPECT_LT(down.total_sigma(), d.total_sigma());
  EXPECT_GT(up.total_sigma(), d.total_sigma());
  const auto [lu, ld] = smear_variants(d, 50.0, SmearVariation::Linear);
  EXPECT_DOUBLE_EQ(lu.extra_smear_sigma, 96.0);
  EXPECT_DOUBLE_EQ(ld.extra_smear_sigma, 0.0);
}

TEST(SmearSystematic, ZeroDeltaIsZero) {
  const ResponseMatrix of = synthetic(FlavourClass::OF, 1.0, 31);
  const ResponseMatrix sf = synthetic(FlavourClass::SF, 1.0, 32);
  const BinnedCounts m = fold(of, sf, positive_vector(1), positive_vector(2));
  const auto s = smear_systematic(
      m, [&](const DetectorConfig&) { return std::pair{of, sf}; }, DetectorConfig{}, 0.0,
      SmearVariation::Quadrature, UnfoldConfig{});
  for (double v : s) EXPECT_EQ(v, 0.0);
}

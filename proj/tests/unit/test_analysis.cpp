#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "flavent/analysis.hpp"
#include "flavent/error.hpp"
#include "flavent/fitkit.hpp"
#include "flavent/rng.hpp"
#include "flavent/toygen.hpp"

using namespace flavent;

namespace {

BinnedCounts counts(std::vector<double> of, std::vector<double> sf) {
  std::vector<double> edges(of.size() + 1);
  std::iota(edges.begin(), edges.end(), 0.0);
  BinnedCounts c = BinnedCounts::zeros(Binning(edges));
  c.n_of = c.var_of = std::move(of);
  c.n_sf = c.var_sf = std::move(sf);
  return c;
}

std::vector<EventRecord> toy(std::size_t n, std::uint64_t seed, double w, bool bkg) {
  GenerationRequest r;
  r.signal_events = n;
  r.seed = seed;
  r.detector = {0.0, 0.0, w};
  r.with_backgrounds = bkg;
  r.backgrounds = BackgroundConfig::nominal();
  return generate_events(r);
}

// The first `n` bins of a histogram.
BinnedCounts head(const BinnedCounts& c, std::size_t n) {
  const auto e = c.binning.edges();
  BinnedCounts h = BinnedCounts::zeros(Binning(std::vector<double>(e.begin(), e.begin() + n + 1)));
  for (std::size_t i = 0; i < n; ++i) {
    h.n_of[i] = c.n_of[i];
    h.n_sf[i] = c.n_sf[i];
    h.var_of[i] = c.var_of[i];
    h.var_sf[i] = c.var_sf[i];
    h.cov[i] = c.cov[i];
  }
  h.poisson = c.poisson;
  return h;
}

}  // namespace

TEST(BinEvents, EmptyInput) {
  const auto c = bin_events({}, Binning{}, DtSource::True);
  ASSERT_EQ(c.size(), 11u);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_EQ(c.n_of[i] + c.n_sf[i], 0.0);
}

TEST(BinEvents, SingleEvent) {
  EventRecord e;
  e.dt_true = e.dt_rec = 0.25;
  const auto c = bin_events(std::vector<EventRecord>{e}, Binning{}, DtSource::True);
  EXPECT_EQ(c.n_of[0], 1.0);
  EXPECT_EQ(std::accumulate(c.n_of.begin(), c.n_of.end(), 0.0), 1.0);
  EXPECT_EQ(std::accumulate(c.n_sf.begin(), c.n_sf.end(), 0.0), 0.0);
}

TEST(BinEvents, OverflowAndSource) {
  EventRecord e;
  e.dt_true = 25.0;
  e.dt_rec = 1.2;
  e.cls_assigned = FlavourClass::SF;
  const std::vector<EventRecord> v{e};
  EXPECT_EQ(bin_events(v, Binning{}, DtSource::True).overflow_of, 1.0);
  EXPECT_EQ(bin_events(v, Binning{}, DtSource::Reconstructed).n_sf[2], 1.0);
}

TEST(BinEvents, FullScaleDensityFalls) {
  const auto c = bin_events(toy(8565, 1, 0.0, false), Binning{}, DtSource::True);
  const Binning b;
  for (std::size_t i = 0; i + 1 < 9; ++i) {
    const double d0 = (c.n_of[i] + c.n_sf[i]) / (b.hi(i) - b.lo(i));
    const double d1 = (c.n_of[i + 1] + c.n_sf[i + 1]) / (b.hi(i + 1) - b.lo(i + 1));
    EXPECT_GT(d0, d1) << i;
  }
}

TEST(Asymmetry, BinomialExample) {
  const auto s = asymmetry(counts({75}, {25}));
  EXPECT_DOUBLE_EQ(s.a[0], 0.5);
  EXPECT_NEAR(s.stat_err[0], 2 * std::sqrt(75.0 * 25 / 1e6), 1e-15);
  EXPECT_NEAR(s.stat_err[0], 0.0866, 1e-4);
}

TEST(Asymmetry, BinomialMatchesBootstrap) {
  Rng rng = make_stream(77, 0);
  std::binomial_distribution<int> draw(100, 0.75);
  double s1 = 0, s2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double k = draw(rng);
    const double a = (2 * k - 100) / 100;
    s1 += a, s2 += a * a;
  }
  const double sd = std::sqrt(s2 / n - (s1 / n) * (s1 / n));
  EXPECT_NEAR(sd, 0.0866, 0.0866 * 0.03);
}

TEST(Asymmetry, EqualCountsGiveZero) {
  EXPECT_EQ(asymmetry(counts({40}, {40})).a[0], 0.0);
}

TEST(Asymmetry, DegenerateBinGetsBootstrapError) {
  const auto s = asymmetry(counts({30, 50}, {0, 10}), 5);
  EXPECT_EQ(s.a[0], 1.0);
  EXPECT_TRUE(s.degenerate[0]);
  EXPECT_GT(s.stat_err[0], 0.0);
  EXPECT_FALSE(s.degenerate[1]);
}

TEST(Asymmetry, EmptyBinThrows) {
  EXPECT_THROW(asymmetry(counts({0}, {0})), ValidationError);
}

TEST(Asymmetry, RawCountsStayInRange) {
  const auto s = asymmetry(bin_events(toy(5000, 3, 0.015, true), Binning{}, DtSource::Reconstructed));
  for (double a : s.a) {
    EXPECT_GE(a, -1.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Subtraction, ZeroBackgroundIsIdentity) {
  const auto c = counts({10, 20}, {5, 7});
  const auto r = subtract_background(c, {});
  EXPECT_EQ(r.counts.n_of, c.n_of);
  EXPECT_EQ(r.counts.n_sf, c.n_sf);
}

TEST(Subtraction, NominalYieldArithmetic) {
  BinnedCounts c = counts({6718}, {1847});
  std::vector<BackgroundTemplate> t;
  for (auto [of, sf] : {std::pair{126.0, 54.0}, {78.0, 237.0}, {254.0, 1.5}}) {
    BackgroundTemplate b;
    b.expected = counts({of}, {sf});
    b.n_of = of;
    b.n_sf = sf;
    b.err_of = 1;
    b.err_sf = 1;
    t.push_back(b);
  }
  const auto r = subtract_background(c, t);
  EXPECT_DOUBLE_EQ(r.counts.n_of[0], 6260.0);
  EXPECT_DOUBLE_EQ(r.counts.n_sf[0], 1554.5);
  EXPECT_EQ(r.counts.var_of[0], 6718.0);
}

TEST(Subtraction, NegativeCountsKeptAndFlagged) {
  BackgroundTemplate b;
  b.expected = counts({3, 0}, {8, 0});
  b.n_of = 3, b.n_sf = 8, b.err_of = 1, b.err_sf = 1;
  const auto r = subtract_background(counts({10, 4}, {5, 4}), std::vector{b});
  EXPECT_DOUBLE_EQ(r.counts.n_sf[0], -3.0);
  EXPECT_TRUE(r.negative[0]);
  EXPECT_FALSE(r.negative[1]);
}

TEST(Mistag, Oracles) {
  AsymmetrySpectrum s = asymmetry(counts({97, 60}, {3, 40}));
  EXPECT_NEAR(s.a[0], 0.94, 1e-12);
  s.a[0] = 0.97;
  const auto c = correct_mistag(s, 0.015, 0.005);
  EXPECT_NEAR(c.a[0], 1.0, 1e-12);
  const auto id = correct_mistag(s, 0.0, 0.0);
  EXPECT_EQ(id.a, s.a);
}

TEST(Mistag, CountLevelMatchesAsymmetryLevel) {
  const auto c = counts({90, 60}, {10, 40});
  const auto a1 = correct_mistag(asymmetry(c), 0.1, 0.0);
  const auto a2 = asymmetry(correct_mistag_counts(c, 0.1));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(a1.a[i], a2.a[i], 1e-12);
}

TEST(Systematics, BreakdownSumsInQuadrature) {
  AsymmetrySpectrum s = asymmetry(counts({90, 60}, {10, 40}));
  s.set_systematic("x", {0.01, 0.02});
  s.set_systematic("y", {0.03, 0.0});
  EXPECT_EQ(s.syst_err[0], std::hypot(0.01, 0.03));
  EXPECT_EQ(s.syst_err[1], 0.02);
}

// Pooled pulls over 200 toys and bins 1-9 against the rate-weighted QM
// expectation: background subtraction with expected templates, and mistag
// correction of flipped events.
TEST(Closure, SubtractionAndMistagPulls) {
  const Binning b;
  DetectorConfig none{0.0, 0.0, 0.0};
  BackgroundConfig bc = BackgroundConfig::nominal();
  const auto templates = build_background_templates(bc, none, b, 99);
  std::vector<double> pred;
  for (std::size_t i = 0; i < b.size(); ++i)
    pred.push_back(bin_prediction(FitModel::QM, ModelParams{}, b.lo(i), b.hi(i)).upper);

  double m1 = 0, q1 = 0, m2 = 0, q2 = 0;
  int n = 0;
  for (int r = 0; r < 200; ++r) {
    const auto sub = subtract_background(
        bin_events(toy(7815, 1000 + r, 0.0, true), b, DtSource::Reconstructed), templates);
    const auto got = asymmetry(head(sub.counts, 9));
    const auto flipped = correct_mistag(
        asymmetry(head(bin_events(toy(7815, 5000 + r, 0.05, false), b, DtSource::Reconstructed), 9)), 0.05,
        0.0);
    for (std::size_t i = 0; i < 9; ++i) {
      const double p1 = (got.a[i] - pred[i]) / got.stat_err[i];
      const double p2 = (flipped.a[i] - pred[i]) / flipped.stat_err[i];
      m1 += p1, q1 += p1 * p1, m2 += p2, q2 += p2 * p2;
      ++n;
    }
  }
  m1 /= n, m2 /= n;
  EXPECT_NEAR(m1, 0.0, 0.1);
  EXPECT_NEAR(std::sqrt(q1 / n - m1 * m1), 1.0, 0.1);
  EXPECT_NEAR(m2, 0.0, 0.1);
  EXPECT_NEAR(std::sqrt(q2 / n - m2 * m2), 1.0, 0.1);
}

TEST(Closure, ExactTemplatesRecoverSignal) {
  const Binning b;
  const auto ev = toy(3000, 7, 0.015, true);
  std::vector<EventRecord> sig, bkg;
  for (const auto& e : ev) (e.category == Category::signal ? sig : bkg).push_back(e);
  BackgroundTemplate t;
  t.expected = bin_events(bkg, b, DtSource::Reconstructed);
  const auto sub = subtract_background(bin_events(ev, b, DtSource::Reconstructed), std::vector{t});
  const auto ref = bin_events(sig, b, DtSource::Reconstructed);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_DOUBLE_EQ(sub.counts.n_of[i], ref.n_of[i]);
    EXPECT_DOUBLE_EQ(sub.counts.n_sf[i], ref.n_sf[i]);
  }
}

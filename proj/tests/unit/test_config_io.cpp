#include <sstream>

#include <gtest/gtest.h>

#include "flavent/config.hpp"
#include "flavent/error.hpp"
#include "flavent/hash.hpp"
#include "flavent/io.hpp"
#include "flavent/toygen.hpp"

using namespace flavent;

namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(IniFile::parse(text, "test.ini"));
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultsAreNominal) {
  const RunConfig c = parse_config(IniFile::parse("", "empty"));
  EXPECT_EQ(c.params.dm, 0.507);
  EXPECT_EQ(c.params.tau, 1.53);
  EXPECT_EQ(c.detector.resolution_sigma, 100.0);
  EXPECT_EQ(c.detector.extra_smear_sigma, 46.0);
  EXPECT_EQ(c.detector.mistag_fraction, 0.015);
  EXPECT_EQ(c.unfold.rank_of, 5);
  EXPECT_EQ(c.unfold.rank_sf, 6);
  EXPECT_EQ(c.unfold.mix_s, 0.2);
  EXPECT_EQ(c.constraint.mean, 0.496);
  EXPECT_EQ(c.constraint.sigma, 0.014);
  EXPECT_EQ(c.binning, Binning{});
  EXPECT_EQ(c.event_selection.size(), 11u);
  EXPECT_EQ(c.replicas, 300u);
  EXPECT_FALSE(c.seed.has_value());
  EXPECT_THROW(c.require_seed(), ValidationError);
}

TEST(Config, ShippedIniMatchesDefaults) {
  RunConfig d;
  d.seed = 20100405;
  EXPECT_EQ(load_config(FLAVENT_NOMINAL_INI).canonical(), d.canonical());
}

TEST(Config, Overrides) {
  const RunConfig c = parse_config(IniFile::parse(R"(
# comment
[model]
dm = 0.5
generator = SD
[detector]
mistag_fraction = 0.02   ; inline
[backgrounds]
enabled = false
wrong_combination.n_sf = 200
[unfold]
rank_of = 4
regularization = plain
[fit]
models = QM, PS
averaging = midpoint
[run]
seed = 17
replicas = 12
)"));
  EXPECT_EQ(c.params.dm, 0.5);
  EXPECT_EQ(c.generator, GenModel::SD);
  EXPECT_EQ(c.detector.mistag_fraction, 0.02);
  EXPECT_FALSE(c.backgrounds_enabled);
  EXPECT_EQ(c.backgrounds.components[1].n_sf, 200.0);
  EXPECT_EQ(c.unfold.rank_of, 4);
  EXPECT_EQ(c.unfold.regularization, Regularization::Plain);
  EXPECT_EQ(c.fit_models, (std::vector<FitModel>{FitModel::QM, FitModel::PS}));
  EXPECT_EQ(c.averaging, BinAveraging::Midpoint);
  EXPECT_EQ(c.require_seed(), 17u);
  EXPECT_EQ(c.replicas, 12u);
}

TEST(Config, DiagnosticsNameTheLine) {
  EXPECT_NE(message_of("[model]\ndm = -1\n").find("test.ini"), std::string::npos);
  EXPECT_NE(message_of("[model]\nfoo = 1\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(message_of("[model]\ndm = 0.5\ndm = 0.6\n").find("duplicate"), std::string::npos);
  EXPECT_NE(message_of("dm = 0.5\n").find("test.ini:1"), std::string::npos);
  EXPECT_NE(message_of("[model\n").find("unterminated"), std::string::npos);
  EXPECT_NE(message_of("[model]\ndm = abc\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(message_of("[fit]\nmodels = QM, XY\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(message_of("[analysis]\nbinning = 0, 1, 2\n").find("ranks"), std::string::npos);
  EXPECT_NE(message_of("[analysis]\nbinning = 0, 2, 1\n").find("test.ini:2"), std::string::npos);
  EXPECT_TRUE(message_of("[analysis]\nbinning = 0, 1, 2\n[unfold]\nrank_of = 2\nrank_sf = 2\n").empty());
}

TEST(Config, CanonicalHashTracksContent) {
  const RunConfig a = parse_config(IniFile::parse("[model]\ndm = 0.5\n"));
  const RunConfig b = parse_config(IniFile::parse("[model]\ndm = 0.50\n"));
  const RunConfig c = parse_config(IniFile::parse("[unfold]\nrank_sf = 5\n"));
  EXPECT_EQ(sha256_hex(a.canonical()), sha256_hex(b.canonical()));
  EXPECT_NE(sha256_hex(a.canonical()), sha256_hex(c.canonical()));
}

TEST(Hash, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, EventsRoundTrip) {
  GenerationRequest r;
  r.signal_events = 300;
  r.seed = 5;
  r.backgrounds = BackgroundConfig::nominal();
  const auto ev = generate_events(r);
  std::ostringstream out;
  write_events(out, ev);
  std::istringstream in(out.str());
  EXPECT_EQ(read_events(in), ev);
}

TEST(Io, MalformedEventRowNamesRow) {
  std::istringstream in(std::string(kEventHeader) + "\n1,2,1,OF,0,0,OF,signal,0,0\n1,2,x,OF,0,0,OF,signal,0,1\n");
  try {
    read_events(in, "ev.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("ev.csv"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("ev.csv:3: data row 2: bad dt_true_ps"), std::string::npos) << e.what();
  }
}

TEST(Io, SpectrumRoundTripAndFixture) {
  std::istringstream f(read_file(FLAVENT_FIXTURE));
  const AsymmetrySpectrum s = read_spectrum(f, "fixture");
  ASSERT_EQ(s.size(), 11u);
  EXPECT_EQ(s.a[0], 1.013);
  EXPECT_EQ(s.stat_err[0], 0.020);
  EXPECT_EQ(s.syst_err[0], 0.019);
  EXPECT_EQ(s.binning, Binning{});
  EXPECT_EQ(s.syst_breakdown.size(), 4u);
  std::ostringstream out;
  write_spectrum(out, s);
  std::istringstream back(out.str());
  const AsymmetrySpectrum t = read_spectrum(back);
  EXPECT_EQ(t.a, s.a);
  EXPECT_EQ(t.stat_err, s.stat_err);
  EXPECT_EQ(t.syst_err, s.syst_err);
  std::ostringstream again;
  write_spectrum(again, t);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Io, FixtureSystematicsCompose) {
  std::istringstream f(read_file(FLAVENT_FIXTURE));
  AsymmetrySpectrum s = read_spectrum(f, "fixture");
  // Published totals are rounded; recomputed quadrature sums agree to the last digit.
  const auto published = s.syst_err;
  s.recompute_syst();
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.syst_err[i], published[i], 0.0015) << i;
}

TEST(Io, CountsMatrixResponseRoundTrip) {
  BinnedCounts c = BinnedCounts::zeros(Binning{});
  for (std::size_t i = 0; i < 11; ++i) {
    c.n_of[i] = 0.1 * i + 1.0 / 3.0;
    c.n_sf[i] = -2.5 + i;
    c.var_of[i] = 7.0 / (i + 1);
    c.var_sf[i] = 1e-3 * i;
    c.cov[i] = -0.25 * i;
  }
  c.poisson = false;
  std::ostringstream o1;
  write_counts(o1, c);
  std::istringstream i1(o1.str());
  const auto c2 = read_counts(i1);
  EXPECT_EQ(c2.n_of, c.n_of);
  EXPECT_EQ(c2.n_sf, c.n_sf);
  EXPECT_EQ(c2.cov, c.cov);

  Eigen::MatrixXd m = Eigen::MatrixXd::Random(4, 3);
  std::ostringstream o2;
  write_matrix(o2, m);
  std::istringstream i2(o2.str());
  EXPECT_EQ(read_matrix(i2), m);

  GenerationRequest r;
  r.signal_events = 2000;
  r.seed = 3;
  r.with_backgrounds = false;
  const auto [of, sf] = build_response(generate_events(r), Binning{});
  std::ostringstream o3;
  write_responses(o3, of, sf);
  std::istringstream i3(o3.str());
  const auto [of2, sf2] = read_responses(i3);
  EXPECT_EQ(of2.counts, of.counts);
  EXPECT_EQ(sf2.truth_totals, sf.truth_totals);
  EXPECT_EQ(sf2.cls, FlavourClass::SF);
}

TEST(Io, ResponseBinningHashChecked) {
  GenerationRequest r;
  r.signal_events = 100;
  r.seed = 3;
  r.with_backgrounds = false;
  const auto [of, sf] = build_response(generate_events(r), Binning{});
  std::ostringstream o;
  write_responses(o, of, sf);
  std::string text = o.str();
  const auto pos = text.find("binning_hash,");
  ASSERT_NE(pos, std::string::npos);
  text[pos + 13] = text[pos + 13] == '0' ? '1' : '0';
  std::istringstream in(text);
  EXPECT_THROW(read_responses(in), ValidationError);
}

TEST(Io, MissingFileIsValidationError) {
  EXPECT_THROW(read_file("/nonexistent/file.csv"), ValidationError);
}

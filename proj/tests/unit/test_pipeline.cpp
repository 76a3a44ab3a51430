#include <cmath>

#include <gtest/gtest.h>

#include "flavent/pipeline.hpp"
#include "flavent/study.hpp"

using namespace flavent;

namespace {

RunConfig nominal(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.template_events = 50000;
  return c;
}

}  // namespace

TEST(Pipeline, ZeroBackgroundSubtractionIsNoOp) {
  RunConfig c = nominal(1);
  c.backgrounds_enabled = false;
  c.detector.mistag_fraction = 0.0;
  const auto raw = bin_events(generate_data(c, GenModel::QM, 2000, 1), c.binning, DtSource::Reconstructed);
  const Analysis an = analyze(raw, c, background_templates(c, 1));
  EXPECT_EQ(an.subtracted.counts.n_of, raw.n_of);
  EXPECT_EQ(an.subtracted.counts.n_sf, raw.n_sf);
  EXPECT_EQ(an.corrected.n_of, raw.n_of);
}

TEST(Pipeline, GenerationIsDeterministic) {
  const RunConfig c = nominal(5);
  EXPECT_EQ(generate_data(c, GenModel::SD, 500, 5), generate_data(c, GenModel::SD, 500, 5));
}

TEST(Pipeline, ModelTruthMatchesPredictions) {
  const RunConfig c = nominal(1);
  const auto qm = model_truth(GenModel::QM, c);
  for (std::size_t i = 0; i < qm.size(); ++i)
    EXPECT_NEAR(qm[i], bin_prediction(FitModel::QM, c.params, c.binning.lo(i), c.binning.hi(i)).upper, 1e-12);
}

TEST(Pipeline, QmChainPrefersQm) {
  RunConfig c = nominal(2024);
  c.replicas = 20;
  const std::uint64_t seed = c.require_seed();
  const auto raw = bin_events(generate_data(c, GenModel::QM, c.signal_events, seed + 1), c.binning,
                              DtSource::Reconstructed);
  const auto templates = background_templates(c, seed);
  const Analysis an = analyze(raw, c, templates);
  const auto response = build_response(generate_mc(c, c.detector, seed), c.binning);
  const Ensemble e = run_ensemble(c, {GenModel::QM, GenModel::SD, GenModel::PS_MAX}, c.replicas, seed);
  const BiasCorrection bias = ensemble_bias(e, 10);
  const Unfolding u = unfold_analysis(an, c, templates, response, &bias, {});
  for (const char* src : {"event_sel", "bkg_sub", "wrong_tags", "deconvolution"})
    EXPECT_NE(u.spectrum.systematic(src), nullptr) << src;
  const FitSummary f = fit_all(u.spectrum, c);
  ASSERT_GE(f.fits.size(), 3u);
  EXPECT_GT(f.significance[0][1], 0.0);  // SD worse than QM
  EXPECT_GT(f.significance[0][2], 0.0);  // PS worse than QM
}

TEST(Study, ThreadCountDoesNotMatter) {
  RunConfig c = nominal(77);
  c.threads = 1;
  const auto a = run_ensemble(c, {GenModel::QM}, 4, 77);
  c.threads = 3;
  const auto b = run_ensemble(c, {GenModel::QM}, 4, 77);
  EXPECT_EQ(a.runs[0].a, b.runs[0].a);
}

TEST(StageLog, JsonCarriesHashes) {
  StageLog log;
  log.stage = "fit";
  log.seed = 3;
  log.inputs["in.csv"] = "abc";
  log.config_hash = "def";
  const std::string j = log.to_json();
  EXPECT_NE(j.find("\"stage\": \"fit\""), std::string::npos);
  EXPECT_NE(j.find("\"in.csv\": \"abc\""), std::string::npos);
  EXPECT_NE(j.find("\"config_sha256\": \"def\""), std::string::npos);
}

#include "flavent/study.hpp"

#include <cmath>
#include <limits>

#include "flavent/analysis.hpp"
#include "flavent/error.hpp"
#include "flavent/fitkit.hpp"
#include "flavent/parallel.hpp"
#include "flavent/pipeline.hpp"
#include "flavent/rng.hpp"

namespace flavent {

namespace {

struct ReplicaOutput {
  std::vector<double> a;
  std::vector<double> stat;
  bool ok = false;
};

ReplicaOutput run_replica(const RunConfig& cfg, GenModel model,
                          const std::vector<BackgroundTemplate>& templates,
                          const std::pair<ResponseMatrix, ResponseMatrix>& response,
                          std::uint64_t seed) {
  ReplicaOutput out;
  try {
    const auto data = generate_data(cfg, model, cfg.signal_events, seed);
    const Analysis an =
        analyze(bin_events(data, cfg.binning, DtSource::Reconstructed), cfg, templates);
    const auto& [of, sf] = response;
    const AsymmetrySpectrum s = unfolded_asymmetry(dsvd_unfold(an.corrected, of, sf, cfg.unfold));
    out.a = s.a;
    out.stat = s.stat_err;
    out.ok = true;
  } catch (const NumericalError&) {
    out.ok = false;
  }
  return out;
}

}  // namespace

Ensemble run_ensemble(const RunConfig& cfg, const std::vector<GenModel>& models,
                      std::size_t replicas, std::uint64_t seed) {
  cfg.validate();
  const auto templates = background_templates(cfg, seed);
  const auto response = build_response(generate_mc(cfg, cfg.detector, seed), cfg.binning);
  RunConfig serial = cfg;
  serial.threads = 1;

  Ensemble e;
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::vector<ReplicaOutput> outputs(replicas);
    parallel_for(replicas, cfg.threads, [&](std::size_t r) {
      Rng rng = make_stream(seed, r, kPurposeEnsemble + static_cast<std::uint64_t>(models[m]));
      outputs[r] = run_replica(serial, models[m], templates, response, rng());
    });
    ModelRun run;
    run.model = models[m];
    run.truth = model_truth(models[m], cfg);
    for (auto& o : outputs) {
      if (!o.ok) {
        ++run.failures;
        continue;
      }
      run.a.push_back(std::move(o.a));
      run.stat.push_back(std::move(o.stat));
    }
    e.runs.push_back(std::move(run));
  }
  return e;
}

BiasCorrection ensemble_bias(const Ensemble& e, std::size_t min_replicas) {
  std::vector<ModelEnsemble> ens;
  for (const auto& run : e.runs) ens.push_back({std::string(to_string(run.model)), run.truth, run.a});
  return bias_correct(ens, min_replicas);
}

PullStats pull_stats(const ModelRun& run, const std::vector<double>& correction) {
  const std::size_t bins = run.truth.size();
  if (correction.size() != bins) throw ValidationError("correction has the wrong number of bins");
  PullStats p;
  p.mean.assign(bins, 0.0);
  p.width.assign(bins, 0.0);
  const double n = static_cast<double>(run.a.size());
  if (run.a.size() < 2) throw ValidationError("pull statistics need at least two replicas");
  for (std::size_t i = 0; i < bins; ++i) {
    double sum = 0.0;
    double sum2 = 0.0;
    for (std::size_t r = 0; r < run.a.size(); ++r) {
      const double pull = (run.a[r][i] - correction[i] - run.truth[i]) / run.stat[r][i];
      sum += pull;
      sum2 += pull * pull;
    }
    p.mean[i] = sum / n;
    p.width[i] = std::sqrt(std::max(0.0, (sum2 - n * p.mean[i] * p.mean[i]) / (n - 1.0)));
  }
  return p;
}

std::vector<double> qm_over_sd_significance(const ModelRun& run, const BiasCorrection& bias,
                                            const RunConfig& cfg) {
  std::vector<double> out(run.a.size(), std::numeric_limits<double>::quiet_NaN());
  const FitOptions opts = cfg.fit_options();
  parallel_for(run.a.size(), cfg.threads, [&](std::size_t r) {
    AsymmetrySpectrum s;
    s.binning = cfg.binning;
    s.a = run.a[r];
    for (std::size_t i = 0; i < s.a.size(); ++i) s.a[i] -= bias.correction[i];
    s.stat_err = run.stat[r];
    s.syst_err.assign(s.a.size(), 0.0);
    s.degenerate.assign(s.a.size(), false);
    s.set_systematic("deconvolution", bias.systematic);
    try {
      FitOptions o = opts;
      o.full_covariance = false;
      const FitResult qm = fit_model(s, FitModel::QM, cfg.constraint, o);
      const FitResult sd = fit_model(s, FitModel::SD, cfg.constraint, o);
      out[r] = significance(qm, sd);
    } catch (const std::exception&) {
      // left as NaN, which counts as not separating the models
    }
  });
  return out;
}

}  // namespace flavent

#pragma once

// Pseudo-experiment ensembles of the full chain at full data scale: each replica
// draws fresh data and fresh simulation, runs the corrections and unfolds.

#include <cstdint>
#include <vector>

#include "flavent/config.hpp"
#include "flavent/toygen.hpp"
#include "flavent/unfold.hpp"

namespace flavent {

struct ModelRun {
  GenModel model = GenModel::QM;
  std::vector<double> truth;                // expected truth-level asymmetry
  std::vector<std::vector<double>> a;       // replica x bin, unfolded
  std::vector<std::vector<double>> stat;    // replica x bin
  std::size_t failures = 0;                 // replicas dropped on NumericalError
};

struct Ensemble {
  std::vector<ModelRun> runs;
};

/// `replicas` pseudo-experiments per model, parallel over cfg.threads.
/// Results do not depend on the thread count.
Ensemble run_ensemble(const RunConfig& cfg, const std::vector<GenModel>& models,
                      std::size_t replicas, std::uint64_t seed);

BiasCorrection ensemble_bias(const Ensemble& e, std::size_t min_replicas);

struct PullStats {
  std::vector<double> mean;
  std::vector<double> width;  // sample standard deviation
};

/// Pulls (a - correction - truth) / stat per bin.
PullStats pull_stats(const ModelRun& run, const std::vector<double>& correction);

/// Per replica sqrt(chi2_SD - chi2_QM) of the bias-corrected spectrum with
/// stat (+) deconvolution errors; NaN where a fit fails.
std::vector<double> qm_over_sd_significance(const ModelRun& run, const BiasCorrection& bias,
                                            const RunConfig& cfg);

}  // namespace flavent

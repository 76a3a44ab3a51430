#pragma once

// The measurement chain as composable stages: generation, binning and
// corrections, deconvolution with its systematics, and the model fits.
// Each stage is a pure function of its inputs and the run configuration.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flavent/analysis.hpp"
#include "flavent/config.hpp"
#include "flavent/fitkit.hpp"
#include "flavent/toygen.hpp"
#include "flavent/unfold.hpp"

namespace flavent {

// Stream purposes, so consumers sharing a master seed never overlap.
inline constexpr std::uint64_t kPurposeData = 0xDA7A;
inline constexpr std::uint64_t kPurposeMc = 0x3C;
inline constexpr std::uint64_t kPurposeEnsemble = 0xE115;

/// Signal plus (if enabled) backgrounds for the configured generator.
std::vector<EventRecord> generate_data(const RunConfig& cfg, GenModel model,
                                       std::size_t signal_events, std::uint64_t seed);

/// Signal-only QM simulation, mc_factor times the data signal size.
std::vector<EventRecord> generate_mc(const RunConfig& cfg, const DetectorConfig& detector,
                                     std::uint64_t seed);

std::vector<BackgroundTemplate> background_templates(const RunConfig& cfg, std::uint64_t seed);

struct Analysis {
  BinnedCounts raw;
  SubtractionResult subtracted;
  BinnedCounts corrected;  // subtracted, then mistag-corrected counts
};

/// Subtract backgrounds from reconstructed-dt counts and correct for mistags.
Analysis analyze(const BinnedCounts& raw, const RunConfig& cfg,
                 const std::vector<BackgroundTemplate>& templates);

/// Reconstructed-level corrected asymmetry with event_sel, bkg_sub and
/// wrong_tags systematics. Throws ValidationError when a bin has no net
/// yield left after subtraction.
AsymmetrySpectrum reco_spectrum(const Analysis& an, const RunConfig& cfg, std::uint64_t seed);

struct Unfolding {
  UnfoldResult result;
  AsymmetrySpectrum spectrum;  // bias-corrected when a correction is given
  std::vector<double> bias_syst;
  std::vector<double> smear_syst;
};

/// Deconvolve the analysis counts. Background and mistag systematics are
/// re-derived on the unfolded asymmetry by unfolding the varied inputs.
/// `smear_syst` (may be empty) and the bias systematic form deconvolution.
Unfolding unfold_analysis(const Analysis& an, const RunConfig& cfg,
                          const std::vector<BackgroundTemplate>& templates,
                          const std::pair<ResponseMatrix, ResponseMatrix>& response,
                          const BiasCorrection* bias, std::vector<double> smear_syst);

/// Smearing systematic with MC regenerated under the +-delta variants.
std::vector<double> smearing_systematic(const Analysis& an, const RunConfig& cfg,
                                        std::uint64_t seed);

/// Expected truth-level asymmetry per bin for a generator model.
std::vector<double> model_truth(GenModel model, const RunConfig& cfg);

struct FitSummary {
  std::vector<FitResult> fits;
  /// significance(rows[i], rows[j]) for fitted dm models.
  std::vector<std::vector<double>> significance;
};

FitSummary fit_all(const AsymmetrySpectrum& s, const RunConfig& cfg);

/// Structured text report of the fits and their significance matrix.
std::string format_fit_report(const FitSummary& f, const std::string& input_name);

/// Machine-readable stage log.
struct StageLog {
  std::string stage;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;   // name -> sha256
  std::map<std::string, std::string> outputs;  // name -> sha256
  std::map<std::string, std::string> constants;
  std::map<std::string, std::string> notes;
  std::string config_hash;

  std::string to_json() const;
};

/// Constants in effect, recorded in every log.
std::map<std::string, std::string> constants_record(const RunConfig& cfg);

}  // namespace flavent

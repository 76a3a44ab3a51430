#pragma once

// Binned OF/SF counting, background subtraction, mistag correction and the
// asymmetry estimator with its error propagation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flavent/binning.hpp"
#include "flavent/event.hpp"
#include "flavent/toygen.hpp"

namespace flavent {

/// Per-bin OF/SF yields. Counts are decimals because subtraction and
/// unfolding produce non-integers; `cov` is Cov(n_of[i], n_sf[i]).
struct BinnedCounts {
  Binning binning;
  std::vector<double> n_of;
  std::vector<double> n_sf;
  std::vector<double> var_of;
  std::vector<double> var_sf;
  std::vector<double> cov;
  double overflow_of = 0.0;
  double overflow_sf = 0.0;
  bool poisson = true;  // raw histogram: var == count, no OF/SF covariance

  static BinnedCounts zeros(const Binning& binning);
  std::size_t size() const { return n_of.size(); }
  /// Bins with a negative OF or SF yield.
  std::vector<bool> negative_bins() const;
};

struct AsymmetrySpectrum {
  Binning binning;
  std::vector<double> a;
  std::vector<double> stat_err;
  std::vector<double> syst_err;
  std::vector<std::pair<std::string, std::vector<double>>> syst_breakdown;
  std::vector<bool> degenerate;
  /// Full statistical covariance of `a`, when known (unfolded spectra).
  std::optional<Eigen::MatrixXd> stat_cov;

  std::size_t size() const { return a.size(); }
  double total_error(std::size_t i) const;
  /// Adds or replaces a systematic source and recomputes syst_err.
  void set_systematic(const std::string& source, std::vector<double> values);
  const std::vector<double>* systematic(const std::string& source) const;
  /// syst_err[i] = quadrature sum of the breakdown.
  void recompute_syst();
};

enum class DtSource { True, Reconstructed };

/// Histogram events by dt_true/cls_true or dt_rec/cls_assigned. Events
/// outside the binning go to the overflow tallies.
BinnedCounts bin_events(std::span<const EventRecord> events, const Binning& binning,
                        DtSource which);

/// Expected reconstructed-dt OF/SF yields of one background category.
struct BackgroundTemplate {
  Category category = Category::dstar_fake;
  BinnedCounts expected;
  double n_of = 0.0;
  double n_sf = 0.0;
  double err_of = 0.0;
  double err_sf = 0.0;
};

/// Templates from a high-statistics toy of each configured category, passed
/// through the detector and scaled to the configured yields.
std::vector<BackgroundTemplate> build_background_templates(const BackgroundConfig& b,
                                                           const DetectorConfig& d,
                                                           const Binning& binning,
                                                           std::uint64_t seed,
                                                           std::size_t events_per_template = 200000);

struct SubtractionResult {
  BinnedCounts counts;
  /// Per-bin asymmetry shift from varying each yield by its error.
  std::vector<double> syst;
  std::vector<bool> negative;
};

/// Removes the summed template expectations bin by bin. Variances are those
/// of the input counts; negative results are kept and flagged.
SubtractionResult subtract_background(const BinnedCounts& c,
                                      std::span<const BackgroundTemplate> bkg);

/// (n_of - n_sf)/(n_of + n_sf) with propagated statistical errors.
/// Bins where the binomial error vanishes (an empty class) get a bootstrap
/// error and are flagged degenerate. Throws ValidationError on an empty bin.
AsymmetrySpectrum asymmetry(const BinnedCounts& c, std::uint64_t bootstrap_seed = 0);

/// Undo the (1 - 2w) dilution of the asymmetry and add a "wrong_tags"
/// systematic from w +- w_err.
AsymmetrySpectrum correct_mistag(const AsymmetrySpectrum& a_obs, double w, double w_err);

/// Count-level version of the same correction, mixing OF and SF yields:
/// of' = ((1-w) of - w sf)/(1-2w), sf' = ((1-w) sf - w of)/(1-2w).
BinnedCounts correct_mistag_counts(const BinnedCounts& c, double w);

}  // namespace flavent

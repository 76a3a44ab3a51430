#pragma once

// Least-squares model fits to binned asymmetry spectra with an external
// constraint on dm, the decoherent-fraction fit, lifetime fits and the
// sqrt(delta chi2) model comparison.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flavent/analysis.hpp"
#include "flavent/binning.hpp"
#include "flavent/models.hpp"

namespace flavent {

enum class FitModel { QM, SD, PS, DECOHERED, LIFETIME };

std::string_view to_string(FitModel m);
FitModel fit_model_from_string(std::string_view s);

enum class BinAveraging { RateWeighted, Midpoint };

std::string_view to_string(BinAveraging a);
BinAveraging bin_averaging_from_string(std::string_view s);

struct Constraint {
  double mean = 0.496;   // ps^-1
  double sigma = 0.014;  // ps^-1

  void validate() const;
  double chi2(double dm) const { return (dm - mean) * (dm - mean) / (sigma * sigma); }
};

struct FitOptions {
  ModelParams params;  // tau used for rate weighting and SD/PS shapes
  BinAveraging averaging = BinAveraging::RateWeighted;
  bool full_covariance = false;  // needs spectrum.stat_cov
  double dm_lo = 0.2;
  double dm_hi = 0.9;
  double dm_grid_step = 0.01;
  double dm_tolerance = 1e-5;
  double zeta_lo = -3.0;
  double zeta_hi = 4.0;
  double zeta_tolerance = 1e-4;
};

struct FitResult {
  FitModel model = FitModel::QM;
  double theta_hat = 0.0;  // dm, zeta or tau
  double theta_err = 0.0;  // mean of the two half-widths
  double err_down = 0.0;
  double err_up = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double dm = 0.0;  // profiled dm of a zeta fit, else theta_hat for dm fits
  std::vector<double> residuals;  // per bin, (a - prediction) / sigma
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

/// Model prediction for one bin. Point models return lower == upper.
/// DECOHERED uses p.zeta without range checks so it can float below 0.
AsymmetryBand bin_prediction(FitModel model, const ModelParams& p, double lo, double hi,
                             BinAveraging averaging = BinAveraging::RateWeighted);

std::vector<AsymmetryBand> bin_predictions(FitModel model, const ModelParams& p,
                                           const Binning& binning, BinAveraging averaging);

/// Residuals (a - prediction) per bin; for a band, 0 inside and the distance
/// to the nearest edge outside.
std::vector<double> residuals(const AsymmetrySpectrum& s,
                              const std::vector<AsymmetryBand>& predictions);

/// Data term plus constraint term at the given dm (and opts.params.zeta for
/// DECOHERED).
double chi2(const AsymmetrySpectrum& s, FitModel model, double dm, const Constraint& c,
            const FitOptions& opts = {});

/// One-parameter fit of dm for QM, SD or PS.
FitResult fit_model(const AsymmetrySpectrum& s, FitModel model, const Constraint& c,
                    const FitOptions& opts = {});

/// (dm, zeta) fit of the QM/SD admixture, zeta error from its profile.
FitResult fit_zeta(const AsymmetrySpectrum& s, const Constraint& c, const FitOptions& opts = {});

/// sqrt(chi2_b - chi2_a), negative when b fits better.
double significance(const FitResult& a, const FitResult& b);

enum class LifetimeMethod { MaximumLikelihood, LeastSquares };

/// Lifetime from a summed dt histogram, with exp(-t/tau)/tau normalized over
/// the binning range. `variances` is only used by LeastSquares (floored at 1).
FitResult fit_lifetime(std::span<const double> counts, std::span<const double> variances,
                       const Binning& binning, LifetimeMethod method);

/// Unbinned maximum likelihood on [lo, hi]; times outside are ignored.
FitResult fit_lifetime(std::span<const double> dt, double lo, double hi);

}  // namespace flavent

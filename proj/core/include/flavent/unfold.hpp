#pragma once

// Truncated-SVD deconvolution of reconstructed OF/SF dt spectra.
//
// Each class is unfolded separately. Unknowns are expressed as ratios to the
// MC a-priori truth spectrum; the system is weighted by the measured errors
// and only the deviation from the (normalized) a-priori is truncated, so an
// exact a-priori is reproduced at any rank. Every step is linear in the
// measured counts, which gives the full output covariance.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flavent/analysis.hpp"
#include "flavent/binning.hpp"
#include "flavent/event.hpp"
#include "flavent/toygen.hpp"

namespace flavent {

struct ResponseMatrix {
  FlavourClass cls = FlavourClass::OF;
  Binning binning;
  Eigen::MatrixXd counts;        // (reco bin, truth bin)
  Eigen::VectorXd truth_totals;  // generated per truth bin, any reco outcome
  double truth_overflow = 0.0;   // generated outside the binning
  double reco_overflow = 0.0;    // generated inside, reconstructed outside

  /// counts with each column divided by its truth total: P(reco | truth).
  Eigen::MatrixXd migration() const;
  /// Column efficiencies, sum over reco bins of migration().
  Eigen::VectorXd efficiency() const;
  void validate() const;
};

/// Plain: truncate the weighted system directly. Curvature: truncate after
/// preconditioning with the inverse second-difference operator, so the kept
/// components are the smooth deviations from the a-priori.
enum class Regularization { Plain, Curvature };

std::string_view to_string(Regularization r);
Regularization regularization_from_string(std::string_view s);

struct UnfoldConfig {
  int rank_of = 5;
  int rank_sf = 6;
  double mix_s = 0.2;  // OF + s * SF
  double mix_o = 0.2;  // SF + o * OF
  Regularization regularization = Regularization::Curvature;

  void validate(std::size_t bins) const;
};

/// Fill OF and SF matrices from MC truth (dt_true, cls_true) vs. dt_rec.
std::pair<ResponseMatrix, ResponseMatrix> build_response(std::span<const EventRecord> mc,
                                                         const Binning& binning);

/// n_of -> of + s * sf and n_sf -> sf + o * of, covariance propagated.
BinnedCounts mix_samples(const BinnedCounts& c, const UnfoldConfig& cfg);
/// Exact inverse of mix_samples. Throws ValidationError when s * o == 1.
BinnedCounts demix_samples(const BinnedCounts& mixed, const UnfoldConfig& cfg);
/// Apply the same mixing to the response training samples.
std::pair<ResponseMatrix, ResponseMatrix> mix_responses(const ResponseMatrix& of,
                                                        const ResponseMatrix& sf,
                                                        const UnfoldConfig& cfg);

struct SvdUnfoldResult {
  Eigen::VectorXd truth;
  Eigen::MatrixXd transfer;  // truth = transfer * measured
  Eigen::VectorXd singular_values;
  double weighted_residual = 0.0;  // || W (A w - b) ||
};

/// Single-class truncated SVD unfolding keeping the `rank` largest singular
/// components. `variances` weight the rows (floored at 1 count).
SvdUnfoldResult svd_unfold(const Eigen::VectorXd& measured, const Eigen::VectorXd& variances,
                           const ResponseMatrix& response, int rank,
                           Regularization regularization = Regularization::Curvature);

struct UnfoldResult {
  BinnedCounts truth;
  /// 2n x 2n covariance of [of; sf].
  Eigen::MatrixXd covariance;
  Eigen::VectorXd singular_values_of;
  Eigen::VectorXd singular_values_sf;

  Eigen::MatrixXd cov_of() const;
  Eigen::MatrixXd cov_sf() const;
};

/// Mix, unfold each class at its rank, de-mix, and propagate the full
/// measured covariance. `of`/`sf` are the unmixed MC responses.
UnfoldResult dsvd_unfold(const BinnedCounts& measured, const ResponseMatrix& of,
                         const ResponseMatrix& sf, const UnfoldConfig& cfg);

/// Asymmetry of unfolded counts with its full covariance.
AsymmetrySpectrum unfolded_asymmetry(const UnfoldResult& r);

struct ModelEnsemble {
  std::string model;
  std::vector<double> truth;                  // per-bin true asymmetry
  std::vector<std::vector<double>> unfolded;  // replica x bin
};

struct BiasCorrection {
  std::vector<double> correction;  // subtract from unfolded asymmetry
  std::vector<double> systematic;  // max over models of |corrected - truth|
  std::vector<std::vector<double>> model_bias;  // model x bin, mean(unfolded) - truth
};

/// Model-averaged bias and the residual spread between models. Requires at
/// least three models, each with at least `min_replicas` replicas.
BiasCorrection bias_correct(std::span<const ModelEnsemble> ensembles, std::size_t min_replicas);

enum class SmearVariation { Quadrature, Linear };

/// Detector variants with the tuning term moved by +-delta: in quadrature
/// sqrt(s^2 +- delta^2) or linearly s +- delta (floored at 0).
std::pair<DetectorConfig, DetectorConfig> smear_variants(const DetectorConfig& base, double delta,
                                                         SmearVariation mode);

using ResponseBuilder =
    std::function<std::pair<ResponseMatrix, ResponseMatrix>(const DetectorConfig&)>;

/// Per-bin max |A_variant - A_nominal| when the same measured counts are
/// unfolded with responses built under each smearing variant.
std::vector<double> smear_systematic(const BinnedCounts& measured, const ResponseBuilder& build,
                                     const DetectorConfig& base, double delta,
                                     SmearVariation mode, const UnfoldConfig& cfg);

}  // namespace flavent

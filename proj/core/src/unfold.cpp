#include "flavent/unfold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "flavent/error.hpp"

namespace flavent {

namespace {

constexpr double kMinRelativeSingularValue = 1e-12;
constexpr double kCurvatureXi = 1e-3;

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Stacked [of; sf] covariance of bin-diagonal counts.
Eigen::MatrixXd stacked_covariance(const BinnedCounts& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, i) = c.var_of[i];
    cov(n + i, n + i) = c.var_sf[i];
    cov(i, n + i) = cov(n + i, i) = c.cov[i];
  }
  return cov;
}

// [of'; sf'] = mixing * [of; sf]
Eigen::MatrixXd mixing_matrix(Eigen::Index n, double s, double o) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, n + i) = s;
    m(n + i, i) = o;
  }
  return m;
}

Eigen::MatrixXd demixing_matrix(Eigen::Index n, double s, double o) {
  const double det = 1.0 - s * o;
  if (std::abs(det) < 1e-12) throw ValidationError("mixing fractions with s * o = 1 cannot be inverted");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = 1.0 / det;
    m(i, n + i) = -s / det;
    m(n + i, i) = -o / det;
    m(n + i, n + i) = 1.0 / det;
  }
  return m;
}

BinnedCounts apply_linear(const BinnedCounts& c, const Eigen::MatrixXd& m) {
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::VectorXd y(2 * n);
  y << to_vector(c.n_of), to_vector(c.n_sf);
  const Eigen::VectorXd out = m * y;
  const Eigen::MatrixXd cov = m * stacked_covariance(c) * m.transpose();
  BinnedCounts r = c;
  r.poisson = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.n_of[i] = out(i);
    r.n_sf[i] = out(n + i);
    r.var_of[i] = cov(i, i);
    r.var_sf[i] = cov(n + i, n + i);
    r.cov[i] = cov(i, n + i);
  }
  return r;
}

// Inverse of the second-difference operator with a small diagonal term.
Eigen::MatrixXd curvature_inverse(Eigen::Index n) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = -2.0 + kCurvatureXi;
    if (i > 0) c(i, i - 1) = 1.0;
    if (i + 1 < n) c(i, i + 1) = 1.0;
  }
  c(0, 0) = -1.0 + kCurvatureXi;
  c(n - 1, n - 1) = -1.0 + kCurvatureXi;
  return c.partialPivLu().inverse();
}

}  // namespace

Eigen::MatrixXd ResponseMatrix::migration() const {
  Eigen::MatrixXd m = counts;
  for (Eigen::Index g = 0; g < m.cols(); ++g)
    m.col(g) = truth_totals(g) > 0.0 ? Eigen::VectorXd(m.col(g) / truth_totals(g))
                                     : Eigen::VectorXd::Zero(m.rows());
  return m;
}

Eigen::VectorXd ResponseMatrix::efficiency() const { return migration().colwise().sum().transpose(); }

void ResponseMatrix::validate() const {
  const auto n = static_cast<Eigen::Index>(binning.size());
  if (counts.rows() != n || counts.cols() != n || truth_totals.size() != n)
    throw ValidationError("response matrix dimensions do not match its binning");
  if ((counts.array() < 0.0).any() || (truth_totals.array() < 0.0).any())
    throw ValidationError("response matrix has negative entries");
  const Eigen::VectorXd colsum = counts.colwise().sum().transpose();
  for (Eigen::Index g = 0; g < n; ++g)
    if (colsum(g) > truth_totals(g) * (1.0 + 1e-12) + 1e-9)
      throw ValidationError("response matrix column exceeds its truth total (efficiency > 1)");
}

std::string_view to_string(Regularization r) {
  return r == Regularization::Curvature ? "curvature" : "plain";
}

Regularization regularization_from_string(std::string_view s) {
  if (s == "curvature") return Regularization::Curvature;
  if (s == "plain") return Regularization::Plain;
  throw ValidationError("unknown regularization '" + std::string(s) + "' (curvature|plain)");
}

void UnfoldConfig::validate(std::size_t bins) const {
  const int n = static_cast<int>(bins);
  if (rank_of < 1 || rank_of > n || rank_sf < 1 || rank_sf > n) {
    std::ostringstream os;
    os << "unfolding ranks must lie in [1, " << n << "]";
    throw ValidationError(os.str());
  }
  if (!(mix_s >= 0.0 && mix_s <= 1.0 && mix_o >= 0.0 && mix_o <= 1.0))
    throw ValidationError("mixing fractions must lie in [0, 1]");
  if (std::abs(1.0 - mix_s * mix_o) < 1e-12)
    throw ValidationError("mixing fractions with s * o = 1 cannot be inverted");
}

std::pair<ResponseMatrix, ResponseMatrix> build_response(std::span<const EventRecord> mc,
                                                         const Binning& binning) {
  const auto n = static_cast<Eigen::Index>(binning.size());
  ResponseMatrix of;
  of.cls = FlavourClass::OF;
  of.binning = binning;
  of.counts = Eigen::MatrixXd::Zero(n, n);
  of.truth_totals = Eigen::VectorXd::Zero(n);
  ResponseMatrix sf = of;
  sf.cls = FlavourClass::SF;

  for (const auto& e : mc) {
    ResponseMatrix& r = e.cls_true == FlavourClass::OF ? of : sf;
    const auto g = binning.find(e.dt_true);
    if (!g) {
      r.truth_overflow += 1.0;
      continue;
    }
    r.truth_totals(static_cast<Eigen::Index>(*g)) += 1.0;
    const auto rec = binning.find(e.dt_rec);
    if (!rec) {
      r.reco_overflow += 1.0;
      continue;
    }
    r.counts(static_cast<Eigen::Index>(*rec), static_cast<Eigen::Index>(*g)) += 1.0;
  }
  return {std::move(of), std::move(sf)};
}

BinnedCounts mix_samples(const BinnedCounts& c, const UnfoldConfig& cfg) {
  return apply_linear(c, mixing_matrix(static_cast<Eigen::Index>(c.size()), cfg.mix_s, cfg.mix_o));
}

BinnedCounts demix_samples(const BinnedCounts& mixed, const UnfoldConfig& cfg) {
  return apply_linear(mixed,
                      demixing_matrix(static_cast<Eigen::Index>(mixed.size()), cfg.mix_s, cfg.mix_o));
}

std::pair<ResponseMatrix, ResponseMatrix> mix_responses(const ResponseMatrix& of,
                                                        const ResponseMatrix& sf,
                                                        const UnfoldConfig& cfg) {
  ResponseMatrix mof = of;
  ResponseMatrix msf = sf;
  mof.counts = of.counts + cfg.mix_s * sf.counts;
  mof.truth_totals = of.truth_totals + cfg.mix_s * sf.truth_totals;
  mof.truth_overflow = of.truth_overflow + cfg.mix_s * sf.truth_overflow;
  mof.reco_overflow = of.reco_overflow + cfg.mix_s * sf.reco_overflow;
  msf.counts = sf.counts + cfg.mix_o * of.counts;
  msf.truth_totals = sf.truth_totals + cfg.mix_o * of.truth_totals;
  msf.truth_overflow = sf.truth_overflow + cfg.mix_o * of.truth_overflow;
  msf.reco_overflow = sf.reco_overflow + cfg.mix_o * of.reco_overflow;
  return {std::move(mof), std::move(msf)};
}

SvdUnfoldResult svd_unfold(const Eigen::VectorXd& measured, const Eigen::VectorXd& variances,
                           const ResponseMatrix& response, int rank,
                           Regularization regularization) {
  const Eigen::Index n = response.counts.cols();
  if (measured.size() != response.counts.rows() || variances.size() != measured.size())
    throw ValidationError("svd_unfold: measured vector does not match the response");
  if (rank < 1 || rank > n) {
    std::ostringstream os;
    os << "svd_unfold: rank " << rank << " outside [1, " << n << "]";
    throw ValidationError(os.str());
  }

  // A = P diag(prior) with prior = truth totals, i.e. the raw MC counts.
  const Eigen::VectorXd prior = response.truth_totals;
  const Eigen::MatrixXd a = response.migration() * prior.asDiagonal();
  const Eigen::VectorXd weights = variances.cwiseMax(1.0).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd aw = weights.asDiagonal() * a;

  // Unknowns w = c_inv z; truncating in z keeps the smooth deviations.
  // At full rank the preconditioner cancels and only costs precision.
  const Eigen::MatrixXd cinv = regularization == Regularization::Curvature && rank < n
                                   ? curvature_inverse(n)
                                   : Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(aw * cinv, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // Descending by value, ties kept in index order.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(sv.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return sv(i) > sv(j); });

  const double s_max = sv(order[0]);
  const double s_k = sv(order[static_cast<std::size_t>(rank - 1)]);
  if (!(s_max > 0.0) || s_k / s_max < kMinRelativeSingularValue) {
    std::ostringstream os;
    os << "svd_unfold: rank " << rank << " exceeds the numerical rank of the "
       << to_string(response.cls) << " response (s_k/s_1 = " << (s_max > 0 ? s_k / s_max : 0.0)
       << ")";
    throw NumericalError(os.str());
  }

  // Truncated pseudo-inverse of the weighted system.
  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(n, aw.rows());
  for (int k = 0; k < rank; ++k) {
    const Eigen::Index idx = order[static_cast<std::size_t>(k)];
    pinv += svd.matrixV().col(idx) * svd.matrixU().col(idx).transpose() / sv(idx);
  }
  pinv = cinv * pinv;

  // Normalization of the a-priori to the data: c = sum(b) / sum(A 1).
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd a_ones = a * ones;
  const double norm = a_ones.sum();
  if (!(norm > 0.0)) throw NumericalError("svd_unfold: empty response matrix");
  const Eigen::RowVectorXd dc_db = Eigen::RowVectorXd::Ones(measured.size()) / norm;

  // w = c 1 + pinv (W b - c W A 1);  truth = prior .* w
  const Eigen::MatrixXd dr_db =
      Eigen::MatrixXd(weights.asDiagonal()) - (weights.asDiagonal() * a_ones) * dc_db;
  const Eigen::MatrixXd dw_db = ones * dc_db + pinv * dr_db;

  SvdUnfoldResult out;
  out.transfer = prior.asDiagonal() * dw_db;
  out.truth = out.transfer * measured;
  Eigen::VectorXd sorted(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) sorted(k) = sv(order[static_cast<std::size_t>(k)]);
  out.singular_values = sorted;
  const Eigen::VectorXd w = dw_db * measured;
  out.weighted_residual = (weights.asDiagonal() * (a * w - measured)).norm();
  return out;
}

Eigen::MatrixXd UnfoldResult::cov_of() const {
  const auto n = covariance.rows() / 2;
  return covariance.topLeftCorner(n, n);
}

Eigen::MatrixXd UnfoldResult::cov_sf() const {
  const auto n = covariance.rows() / 2;
  return covariance.bottomRightCorner(n, n);
}

UnfoldResult dsvd_unfold(const BinnedCounts& measured, const ResponseMatrix& of,
                         const ResponseMatrix& sf, const UnfoldConfig& cfg) {
  cfg.validate(measured.size());
  if (!(measured.binning == of.binning) || !(measured.binning == sf.binning))
    throw ValidationError("dsvd_unfold: measured binning does not match the response matrices");
  of.validate();
  sf.validate();

  const auto n = static_cast<Eigen::Index>(measured.size());
  const Eigen::MatrixXd mix = mixing_matrix(n, cfg.mix_s, cfg.mix_o);
  const Eigen::MatrixXd demix = demixing_matrix(n, cfg.mix_s, cfg.mix_o);

  const BinnedCounts mixed = apply_linear(measured, mix);
  const auto [mof, msf] = mix_responses(of, sf, cfg);

  const SvdUnfoldResult uof = svd_unfold(to_vector(mixed.n_of), to_vector(mixed.var_of), mof, cfg.rank_of,
                                            cfg.regularization);
  const SvdUnfoldResult usf = svd_unfold(to_vector(mixed.n_sf), to_vector(mixed.var_sf), msf, cfg.rank_sf,
                                            cfg.regularization);

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = uof.transfer;
  block.bottomRightCorner(n, n) = usf.transfer;
  const Eigen::MatrixXd chain = demix * block * mix;

  Eigen::VectorXd y(2 * n);
  y << to_vector(measured.n_of), to_vector(measured.n_sf);
  const Eigen::VectorXd x = chain * y;
  Eigen::MatrixXd cov = chain * stacked_covariance(measured) * chain.transpose();
  cov = 0.5 * (cov + cov.transpose());

  UnfoldResult r;
  r.truth = BinnedCounts::zeros(measured.binning);
  r.truth.poisson = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.truth.n_of[i] = x(i);
    r.truth.n_sf[i] = x(n + i);
    r.truth.var_of[i] = cov(i, i);
    r.truth.var_sf[i] = cov(n + i, n + i);
    r.truth.cov[i] = cov(i, n + i);
  }
  r.covariance = std::move(cov);
  r.singular_values_of = uof.singular_values;
  r.singular_values_sf = usf.singular_values;
  return r;
}

AsymmetrySpectrum unfolded_asymmetry(const UnfoldResult& r) {
  const auto n = static_cast<Eigen::Index>(r.truth.size());
  AsymmetrySpectrum s;
  s.binning = r.truth.binning;
  s.a.assign(static_cast<std::size_t>(n), 0.0);
  s.stat_err.assign(static_cast<std::size_t>(n), 0.0);
  s.syst_err.assign(static_cast<std::size_t>(n), 0.0);
  s.degenerate.assign(static_cast<std::size_t>(n), false);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double of = r.truth.n_of[i];
    const double sf = r.truth.n_sf[i];
    const double total = of + sf;
    if (!(total > 0.0)) {
      std::ostringstream os;
      os << "unfolded bin " << i + 1 << " has a non-positive total yield";
      throw NumericalError(os.str());
    }
    s.a[i] = (of - sf) / total;
    grad(i, i) = 2.0 * sf / (total * total);
    grad(i, n + i) = -2.0 * of / (total * total);
  }
  Eigen::MatrixXd cov = grad * r.covariance * grad.transpose();
  cov = 0.5 * (cov + cov.transpose());
  for (Eigen::Index i = 0; i < n; ++i) s.stat_err[i] = std::sqrt(std::max(0.0, cov(i, i)));
  s.stat_cov = std::move(cov);
  return s;
}

BiasCorrection bias_correct(std::span<const ModelEnsemble> ensembles, std::size_t min_replicas) {
  if (ensembles.size() < 3)
    throw ValidationError("bias_correct needs ensembles for at least three models");
  const std::size_t bins = ensembles.front().truth.size();
  BiasCorrection out;
  out.correction.assign(bins, 0.0);
  out.systematic.assign(bins, 0.0);
  for (const auto& e : ensembles) {
    if (e.unfolded.size() < min_replicas || e.unfolded.empty()) {
      std::ostringstream os;
      os << "model " << e.model << " has " << e.unfolded.size() << " replicas, need "
         << std::max<std::size_t>(min_replicas, 1);
      throw ValidationError(os.str());
    }
    if (e.truth.size() != bins) throw ValidationError("ensemble truth has the wrong number of bins");
    std::vector<double> bias(bins, 0.0);
    for (const auto& rep : e.unfolded) {
      if (rep.size() != bins) throw ValidationError("replica has the wrong number of bins");
      for (std::size_t i = 0; i < bins; ++i) bias[i] += rep[i];
    }
    for (std::size_t i = 0; i < bins; ++i)
      bias[i] = bias[i] / static_cast<double>(e.unfolded.size()) - e.truth[i];
    out.model_bias.push_back(std::move(bias));
  }
  const double models = static_cast<double>(ensembles.size());
  for (std::size_t i = 0; i < bins; ++i) {
    for (const auto& b : out.model_bias) out.correction[i] += b[i];
    out.correction[i] /= models;
    for (const auto& b : out.model_bias)
      out.systematic[i] = std::max(out.systematic[i], std::abs(b[i] - out.correction[i]));
  }
  return out;
}

std::pair<DetectorConfig, DetectorConfig> smear_variants(const DetectorConfig& base, double delta,
                                                         SmearVariation mode) {
  DetectorConfig up = base;
  DetectorConfig down = base;
  const double s = base.extra_smear_sigma;
  if (mode == SmearVariation::Quadrature) {
    up.extra_smear_sigma = std::sqrt(s * s + delta * delta);
    down.extra_smear_sigma = std::sqrt(std::max(0.0, s * s - delta * delta));
  } else {
    up.extra_smear_sigma = s + delta;
    down.extra_smear_sigma = std::max(0.0, s - delta);
  }
  return {up, down};
}

std::vector<double> smear_systematic(const BinnedCounts& measured, const ResponseBuilder& build,
                                     const DetectorConfig& base, double delta,
                                     SmearVariation mode, const UnfoldConfig& cfg) {
  std::vector<double> out(measured.size(), 0.0);
  if (delta == 0.0) return out;
  const auto [rof, rsf] = build(base);
  const AsymmetrySpectrum nominal = unfolded_asymmetry(dsvd_unfold(measured, rof, rsf, cfg));
  const auto [up, down] = smear_variants(base, delta, mode);
  for (const DetectorConfig& variant : {up, down}) {
    const auto [vof, vsf] = build(variant);
    const AsymmetrySpectrum v = unfolded_asymmetry(dsvd_unfold(measured, vof, vsf, cfg));
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::max(out[i], std::abs(v.a[i] - nominal.a[i]));
  }
  return out;
}

}  // namespace flavent

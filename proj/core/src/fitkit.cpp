#include "flavent/fitkit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "flavent/error.hpp"

namespace flavent {

namespace {

constexpr double kMaxSubinterval = 0.5;  // ps, rate-weighted quadrature pieces
constexpr double kAsymmetryFlag = 0.2;

using Gauss = boost::math::quadrature::gauss<double, 10>;

// Both signs of the symmetric Gauss-Legendre rule on [-1, 1].
template <class F>
void for_each_node(double a, double b, F&& f) {
  const auto& x = Gauss::abscissa();
  const auto& w = Gauss::weights();
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) {
      f(mid, w[i] * half);
    } else {
      f(mid - half * x[i], w[i] * half);
      f(mid + half * x[i], w[i] * half);
    }
  }
}

AsymmetryBand point_value(FitModel model, double dt, const ModelParams& p) {
  double v = 0.0;
  switch (model) {
    case FitModel::QM:
      v = asym_qm(dt, p);
      break;
    case FitModel::SD:
      v = asym_sd_marginal(dt, p);
      break;
    case FitModel::DECOHERED:
      v = (1.0 - p.zeta) * asym_qm(dt, p) + p.zeta * asym_sd_marginal(dt, p);
      break;
    case FitModel::PS:
      return ps_bounds_marginal_closed(dt, p);
    case FitModel::LIFETIME:
      throw ValidationError("LIFETIME has no asymmetry prediction");
  }
  return {v, v};
}

struct Minimum {
  double x = 0.0;
  double f = 0.0;
};

// Deterministic grid scan followed by Brent refinement around the best node.
Minimum minimize_1d(const std::function<double(double)>& f, double lo, double hi, double step) {
  const int n = std::max(2, static_cast<int>(std::ceil((hi - lo) / step)));
  const double h = (hi - lo) / n;
  int best = 0;
  double best_f = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double v = f(lo + i * h);
    if (v < best_f) {
      best_f = v;
      best = i;
    }
  }
  const double a = lo + std::max(0, best - 1) * h;
  const double b = lo + std::min(n, best + 1) * h;
  std::uintmax_t iters = 200;
  const auto [x, fx] = boost::math::tools::brent_find_minima(
      f, a, b, std::numeric_limits<double>::digits / 2, iters);
  if (fx <= best_f) return {x, fx};
  return {lo + best * h, best_f};
}

// First point where f crosses `target`, walking from x0 towards `limit`.
double crossing(const std::function<double(double)>& f, double x0, double target, double step,
                double limit, double tol) {
  const double dir = limit > x0 ? 1.0 : -1.0;
  double a = x0;
  double fa = f(a) - target;
  while (true) {
    double b = a + dir * step;
    if (dir * (b - limit) > 0.0) b = limit;
    const double fb = f(b) - target;
    if (fb >= 0.0) {
      std::uintmax_t iters = 100;
      const auto [l, r] = boost::math::tools::toms748_solve(
          [&](double x) { return f(x) - target; }, std::min(a, b), std::max(a, b),
          dir > 0 ? fa : fb, dir > 0 ? fb : fa,
          [tol](double u, double v) { return std::abs(u - v) < tol; }, iters);
      return 0.5 * (l + r);
    }
    if (b == limit) {
      std::ostringstream os;
      os << "chi2 + 1 crossing not found before " << limit;
      throw NumericalError(os.str());
    }
    a = b;
    fa = fb;
  }
}

void require_spectrum(const AsymmetrySpectrum& s) {
  if (s.size() == 0 || s.size() != s.binning.size())
    throw ValidationError("spectrum does not match its binning");
  if (s.stat_err.size() != s.size() || s.syst_err.size() != s.size())
    throw ValidationError("spectrum error columns have the wrong length");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s.total_error(i) > 0.0)) {
      std::ostringstream os;
      os << "bin " << i + 1 << " has zero total error";
      throw ValidationError(os.str());
    }
  }
}

double data_chi2(const AsymmetrySpectrum& s, const std::vector<double>& r, bool full) {
  if (!full) {
    double sum = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double e = s.total_error(i);
      sum += r[i] * r[i] / (e * e);
    }
    return sum;
  }
  if (!s.stat_cov) throw ValidationError("full-covariance fit needs a spectrum covariance");
  const auto n = static_cast<Eigen::Index>(r.size());
  Eigen::MatrixXd cov = *s.stat_cov;
  for (Eigen::Index i = 0; i < n; ++i) cov(i, i) += s.syst_err[i] * s.syst_err[i];
  const Eigen::Map<const Eigen::VectorXd> rv(r.data(), n);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericalError("spectrum covariance is not positive definite");
  return rv.dot(ldlt.solve(rv));
}

std::vector<double> normalized(const AsymmetrySpectrum& s, std::vector<double> r) {
  for (std::size_t i = 0; i < r.size(); ++i) r[i] /= s.total_error(i);
  return r;
}

void flag_asymmetric(FitResult& r) {
  const double big = std::max(r.err_up, r.err_down);
  if (big > 0.0 && std::abs(r.err_up - r.err_down) / big > kAsymmetryFlag)
    r.flags.emplace_back("non_quadratic");
}

}  // namespace

std::string_view to_string(FitModel m) {
  switch (m) {
    case FitModel::QM: return "QM";
    case FitModel::SD: return "SD";
    case FitModel::PS: return "PS";
    case FitModel::DECOHERED: return "DECOHERED";
    case FitModel::LIFETIME: return "LIFETIME";
  }
  return "?";
}

FitModel fit_model_from_string(std::string_view s) {
  for (auto m : {FitModel::QM, FitModel::SD, FitModel::PS, FitModel::DECOHERED, FitModel::LIFETIME})
    if (s == to_string(m)) return m;
  throw ValidationError("unknown fit model '" + std::string(s) + "'");
}

std::string_view to_string(BinAveraging a) {
  return a == BinAveraging::RateWeighted ? "rate" : "midpoint";
}

BinAveraging bin_averaging_from_string(std::string_view s) {
  if (s == "rate") return BinAveraging::RateWeighted;
  if (s == "midpoint") return BinAveraging::Midpoint;
  throw ValidationError("unknown bin averaging '" + std::string(s) + "' (rate|midpoint)");
}

void Constraint::validate() const {
  if (!(sigma > 0.0)) throw ValidationError("constraint sigma must be > 0");
  if (!std::isfinite(mean)) throw ValidationError("constraint mean must be finite");
}

bool FitResult::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

AsymmetryBand bin_prediction(FitModel model, const ModelParams& p, double lo, double hi,
                             BinAveraging averaging) {
  if (!(lo < hi) || lo < 0.0) throw ValidationError("bin_prediction needs 0 <= lo < hi");
  if (averaging == BinAveraging::Midpoint) return point_value(model, 0.5 * (lo + hi), p);

  // Weight exp(-(t - lo)/tau); R_OF + R_SF is proportional to exp(-t/tau).
  const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / kMaxSubinterval)));
  const double h = (hi - lo) / pieces;
  double lower = 0.0;
  double upper = 0.0;
  for (int k = 0; k < pieces; ++k) {
    for_each_node(lo + k * h, lo + (k + 1) * h, [&](double t, double w) {
      const double weight = w * std::exp(-(t - lo) / p.tau);
      const AsymmetryBand v = point_value(model, t, p);
      lower += weight * v.lower;
      upper += weight * v.upper;
    });
  }
  const double norm = -p.tau * std::expm1(-(hi - lo) / p.tau);
  return {lower / norm, upper / norm};
}

std::vector<AsymmetryBand> bin_predictions(FitModel model, const ModelParams& p,
                                           const Binning& binning, BinAveraging averaging) {
  std::vector<AsymmetryBand> out;
  out.reserve(binning.size());
  for (std::size_t i = 0; i < binning.size(); ++i)
    out.push_back(bin_prediction(model, p, binning.lo(i), binning.hi(i), averaging));
  return out;
}

std::vector<double> residuals(const AsymmetrySpectrum& s,
                              const std::vector<AsymmetryBand>& predictions) {
  if (predictions.size() != s.size()) throw ValidationError("prediction count != bin count");
  std::vector<double> r(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double a = s.a[i];
    const auto& b = predictions[i];
    if (a > b.upper)
      r[i] = a - b.upper;
    else if (a < b.lower)
      r[i] = a - b.lower;
    else
      r[i] = 0.0;
  }
  return r;
}

double chi2(const AsymmetrySpectrum& s, FitModel model, double dm, const Constraint& c,
            const FitOptions& opts) {
  require_spectrum(s);
  c.validate();
  ModelParams p = opts.params;
  p.dm = dm;
  const auto r = residuals(s, bin_predictions(model, p, s.binning, opts.averaging));
  return data_chi2(s, r, opts.full_covariance) + c.chi2(dm);
}

FitResult fit_model(const AsymmetrySpectrum& s, FitModel model, const Constraint& c,
                    const FitOptions& opts) {
  if (model != FitModel::QM && model != FitModel::SD && model != FitModel::PS)
    throw ValidationError("fit_model fits QM, SD or PS");
  require_spectrum(s);
  c.validate();
  if (!(opts.dm_lo > 0.0 && opts.dm_lo < opts.dm_hi))
    throw ValidationError("dm search interval must satisfy 0 < lo < hi");

  const std::function<double(double)> f = [&](double dm) { return chi2(s, model, dm, c, opts); };
  const Minimum m = minimize_1d(f, opts.dm_lo, opts.dm_hi, opts.dm_grid_step);
  if (m.x - opts.dm_lo < 10 * opts.dm_tolerance || opts.dm_hi - m.x < 10 * opts.dm_tolerance) {
    std::ostringstream os;
    os << to_string(model) << " fit: minimum at the boundary of [" << opts.dm_lo << ", "
       << opts.dm_hi << "] (dm = " << m.x << ")";
    throw NumericalError(os.str());
  }

  FitResult r;
  r.model = model;
  r.theta_hat = r.dm = m.x;
  r.chi2 = m.f;
  r.dof = static_cast<int>(s.size());
  const double up = crossing(f, m.x, m.f + 1.0, opts.dm_grid_step, opts.dm_hi, opts.dm_tolerance);
  const double down =
      crossing(f, m.x, m.f + 1.0, opts.dm_grid_step, opts.dm_lo, opts.dm_tolerance);
  r.err_up = up - m.x;
  r.err_down = m.x - down;
  r.theta_err = 0.5 * (r.err_up + r.err_down);
  flag_asymmetric(r);

  ModelParams p = opts.params;
  p.dm = m.x;
  r.residuals = normalized(s, residuals(s, bin_predictions(model, p, s.binning, opts.averaging)));
  return r;
}

FitResult fit_zeta(const AsymmetrySpectrum& s, const Constraint& c, const FitOptions& opts) {
  require_spectrum(s);
  c.validate();
  if (!(opts.zeta_lo < opts.zeta_hi)) throw ValidationError("zeta search interval is empty");

  // The prediction is linear in zeta, so QM and SD bin values are computed
  // once per dm.
  const auto chi2_at = [&](double dm, double zeta) {
    ModelParams p = opts.params;
    p.dm = dm;
    const auto qm = bin_predictions(FitModel::QM, p, s.binning, opts.averaging);
    const auto sd = bin_predictions(FitModel::SD, p, s.binning, opts.averaging);
    std::vector<AsymmetryBand> mix(qm.size());
    for (std::size_t i = 0; i < qm.size(); ++i) {
      const double v = (1.0 - zeta) * qm[i].lower + zeta * sd[i].lower;
      mix[i] = {v, v};
    }
    return data_chi2(s, residuals(s, mix), opts.full_covariance) + c.chi2(dm);
  };
  double profiled_dm = 0.0;
  const std::function<double(double)> profile = [&](double zeta) {
    const Minimum m = minimize_1d([&](double dm) { return chi2_at(dm, zeta); }, opts.dm_lo,
                                  opts.dm_hi, opts.dm_grid_step);
    profiled_dm = m.x;
    return m.f;
  };

  const double zeta_step = 0.05;
  const Minimum m = minimize_1d(profile, opts.zeta_lo, opts.zeta_hi, zeta_step);
  if (m.x - opts.zeta_lo < 10 * opts.zeta_tolerance ||
      opts.zeta_hi - m.x < 10 * opts.zeta_tolerance)
    throw NumericalError("zeta fit: minimum at the boundary of the search interval");
  profile(m.x);
  const double dm_hat = profiled_dm;

  FitResult r;
  r.model = FitModel::DECOHERED;
  r.theta_hat = m.x;
  r.dm = dm_hat;
  r.chi2 = m.f;
  r.dof = static_cast<int>(s.size());
  try {
    const double up = crossing(profile, m.x, m.f + 1.0, zeta_step, opts.zeta_hi, opts.zeta_tolerance);
    const double down =
        crossing(profile, m.x, m.f + 1.0, zeta_step, opts.zeta_lo, opts.zeta_tolerance);
    r.err_up = up - m.x;
    r.err_down = m.x - down;
  } catch (const NumericalError&) {
    throw NumericalError("zeta fit: degenerate profile, chi2 + 1 not reached in the search interval");
  }
  r.theta_err = 0.5 * (r.err_up + r.err_down);
  flag_asymmetric(r);

  ModelParams p = opts.params;
  p.dm = dm_hat;
  p.zeta = m.x;
  r.residuals =
      normalized(s, residuals(s, bin_predictions(FitModel::DECOHERED, p, s.binning, opts.averaging)));
  return r;
}

double significance(const FitResult& a, const FitResult& b) {
  const double d = b.chi2 - a.chi2;
  return d >= 0.0 ? std::sqrt(d) : -std::sqrt(-d);
}

namespace {

constexpr double kTauLo = 0.05;
constexpr double kTauHi = 30.0;
constexpr double kTauStep = 0.05;
constexpr double kTauTolerance = 1e-6;

FitResult finish_lifetime(const std::function<double(double)>& f, double delta, int dof) {
  const Minimum m = minimize_1d(f, kTauLo, kTauHi, kTauStep);
  if (m.x - kTauLo < 1e-3 || kTauHi - m.x < 1e-3)
    throw NumericalError("lifetime fit: minimum at the boundary of the search interval");
  FitResult r;
  r.model = FitModel::LIFETIME;
  r.theta_hat = m.x;
  r.dof = dof;
  r.err_up = crossing(f, m.x, m.f + delta, kTauStep, kTauHi, kTauTolerance) - m.x;
  r.err_down = m.x - crossing(f, m.x, m.f + delta, kTauStep, kTauLo, kTauTolerance);
  r.theta_err = 0.5 * (r.err_up + r.err_down);
  flag_asymmetric(r);
  return r;
}

// Probability content of [a, b] for exp(-t/tau)/tau truncated to [lo, hi].
double bin_probability(double a, double b, double lo, double hi, double tau) {
  // Shift by lo to keep the exponentials in range.
  const double num = std::exp(-(a - lo) / tau) - std::exp(-(b - lo) / tau);
  const double den = -std::expm1(-(hi - lo) / tau);
  return num / den;
}

}  // namespace

FitResult fit_lifetime(std::span<const double> counts, std::span<const double> variances,
                       const Binning& binning, LifetimeMethod method) {
  const std::size_t n = binning.size();
  if (counts.size() != n) throw ValidationError("lifetime fit: counts do not match the binning");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("lifetime fit: empty input");
  const double lo = binning.lo(0);
  const double hi = binning.hi(n - 1);

  if (method == LifetimeMethod::MaximumLikelihood) {
    const auto nll = [&](double tau) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (counts[i] != 0.0)
          sum -= counts[i] * std::log(bin_probability(binning.lo(i), binning.hi(i), lo, hi, tau));
      return sum;
    };
    FitResult r = finish_lifetime(nll, 0.5, static_cast<int>(n) - 1);
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[i] <= 0.0) continue;
      const double mu = total * bin_probability(binning.lo(i), binning.hi(i), lo, hi, r.theta_hat);
      g += 2.0 * counts[i] * std::log(counts[i] / mu);
    }
    r.chi2 = std::max(0.0, g);
    return r;
  }

  if (variances.size() != n) throw ValidationError("lifetime fit: variances do not match the binning");
  const auto lsq = [&](double tau) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d =
          counts[i] - total * bin_probability(binning.lo(i), binning.hi(i), lo, hi, tau);
      sum += d * d / std::max(variances[i], 1.0);
    }
    return sum;
  };
  FitResult r = finish_lifetime(lsq, 1.0, static_cast<int>(n) - 1);
  r.chi2 = lsq(r.theta_hat);
  return r;
}

FitResult fit_lifetime(std::span<const double> dt, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi)) throw ValidationError("lifetime fit: need 0 <= lo < hi");
  double count = 0.0;
  double sum = 0.0;
  for (double t : dt) {
    if (t < lo || t > hi) continue;
    count += 1.0;
    sum += t - lo;
  }
  if (count == 0.0) throw ValidationError("lifetime fit: empty input");
  const auto nll = [&](double tau) {
    return count * std::log(tau) + sum / tau + count * std::log(-std::expm1(-(hi - lo) / tau));
  };
  FitResult r = finish_lifetime(nll, 0.5, 0);
  return r;
}

}  // namespace flavent

#include "flavent/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "flavent/error.hpp"

namespace flavent {

namespace {

constexpr double kMarginalTolerance = 1e-9;
constexpr double kRangeInLifetimes = 40.0;

void require_non_negative(double t, const char* what) {
  if (!(t >= 0.0)) {
    std::ostringstream os;
    os << what << " must be >= 0 (got " << t << ")";
    throw ValidationError(os.str());
  }
}

// Zeros of cos(omega*u + phase) on (0, u_max), i.e. the kinks of |cos(...)|.
void append_cosine_zeros(double omega, double phase, double u_max,
                         std::vector<double>& out) {
  const double pi = std::numbers::pi;
  // omega*u + phase = pi/2 + k*pi, starting from the first k with u >= 0
  for (double k = std::ceil((phase - pi / 2) / pi);; k += 1.0) {
    const double u = (pi / 2 + k * pi - phase) / omega;
    if (u >= u_max) break;
    if (u > 0.0) out.push_back(u);
  }
}

// k * integral_0^inf exp(-k u) |cos(omega u - phi)| du. Between consecutive
// zeros of the cosine the integrand has one sign, and the antiderivative
// exp(-k u) (omega sin - k cos) / (k^2 + omega^2) is +-exp(-k z) omega / (k^2 + omega^2)
// at a zero z, so the tail is a geometric series.
double weighted_abs_cos(double k, double omega, double phi) {
  const double pi = std::numbers::pi;
  const double d = k * k + omega * omega;
  const auto antiderivative = [&](double u) {
    const double th = omega * u - phi;
    return std::exp(-k * u) * (omega * std::sin(th) - k * std::cos(th)) / d;
  };
  const double m = std::ceil((-phi - pi / 2) / pi);
  const double z0 = (pi / 2 + m * pi + phi) / omega;
  const double q = std::exp(-k * pi / omega);
  const double head = std::abs(antiderivative(z0) - antiderivative(0.0));
  const double tail = omega / d * std::exp(-k * z0) * (1.0 + q) / (1.0 - q);
  return k * (head + tail);
}

}  // namespace

void ModelParams::validate() const {
  if (!(dm > 0.0)) throw ValidationError("dm must be > 0");
  if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw ValidationError("zeta must lie in [0, 1]");
}

std::string_view to_string(FlavourClass cls) {
  return cls == FlavourClass::OF ? "OF" : "SF";
}

FlavourClass flavour_class_from_string(std::string_view s) {
  if (s == "OF") return FlavourClass::OF;
  if (s == "SF") return FlavourClass::SF;
  throw ValidationError("unknown flavour class '" + std::string(s) + "'");
}

double rate_qm(double dt, FlavourClass cls, const ModelParams& p) {
  require_non_negative(dt, "dt");
  const double sign = cls == FlavourClass::OF ? 1.0 : -1.0;
  return std::exp(-dt / p.tau) / (4.0 * p.tau) * (1.0 + sign * std::cos(p.dm * dt));
}

double asym_qm(double dt, const ModelParams& p) {
  require_non_negative(dt, "dt");
  return std::cos(p.dm * dt);
}

double asym_sd_joint(double t1, double t2, const ModelParams& p) {
  require_non_negative(t1, "t1");
  require_non_negative(t2, "t2");
  return std::cos(p.dm * t1) * std::cos(p.dm * t2);
}

double marginalize(const JointAsymmetry& joint, double dt, const ModelParams& p,
                   std::vector<double> breakpoints) {
  require_non_negative(dt, "dt");
  using Integrator = boost::math::quadrature::gauss_kronrod<double, 15>;

  const double rate = 2.0 / p.tau;
  const double u_max = kRangeInLifetimes * p.tau;
  auto integrand = [&](double u) { return rate * std::exp(-rate * u) * joint(u, dt); };

  breakpoints.push_back(0.0);
  breakpoints.push_back(u_max);
  std::erase_if(breakpoints, [&](double u) { return !(u >= 0.0 && u <= u_max); });
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

  double sum = 0.0;
  double err_sum = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    double err = 0.0;
    sum += Integrator::integrate(integrand, breakpoints[i], breakpoints[i + 1], 15, 1e-12, &err);
    err_sum += err;
  }
  // Weight mass beyond u_max is exp(-80) relative; the normalization of the
  // truncated weight is corrected exactly.
  const double norm = -std::expm1(-rate * u_max);
  const double value = sum / norm;
  const double tail = std::exp(-rate * u_max) * std::abs(joint(u_max, dt));
  if (!std::isfinite(value) || err_sum + tail > kMarginalTolerance) {
    std::ostringstream os;
    os << "marginalize: quadrature did not converge at dt=" << dt
       << " (error estimate " << err_sum + tail << ")";
    throw NumericalError(os.str());
  }
  return value;
}

double asym_sd_marginal(double dt, const ModelParams& p) {
  require_non_negative(dt, "dt");
  const double x = p.dm * p.tau;
  const double c = std::cos(p.dm * dt);
  const double s = std::sin(p.dm * dt);
  return 0.5 * (c + (c - x * s) / (1.0 + x * x));
}

AsymmetryBand ps_bounds_joint(double t_min, double dt, const ModelParams& p) {
  require_non_negative(t_min, "t_min");
  require_non_negative(dt, "dt");
  const double c = std::cos(p.dm * dt);
  const double s = std::sin(p.dm * dt);
  const double cu = std::cos(p.dm * t_min);
  const double su = std::sin(p.dm * t_min);
  const double psi = (1.0 + c) * cu - s * su;
  AsymmetryBand band;
  band.upper = 1.0 - std::abs((1.0 - c) * cu + s * su);
  band.lower = 1.0 - std::min(2.0 + psi, 2.0 - psi);
  return band;
}

AsymmetryBand ps_bounds_marginal(double dt, const ModelParams& p) {
  require_non_negative(dt, "dt");
  const double c = std::cos(p.dm * dt);
  const double s = std::sin(p.dm * dt);
  const double u_max = kRangeInLifetimes * p.tau;

  // (1-c) cos(x) + s sin(x) = R cos(x - atan2(s, 1-c))
  // (1+c) cos(x) - s sin(x) = R' cos(x + atan2(s, 1+c))
  std::vector<double> upper_kinks;
  std::vector<double> lower_kinks;
  append_cosine_zeros(p.dm, -std::atan2(s, 1.0 - c), u_max, upper_kinks);
  append_cosine_zeros(p.dm, std::atan2(s, 1.0 + c), u_max, lower_kinks);

  AsymmetryBand band;
  band.lower = marginalize(
      [&p](double u, double d) { return ps_bounds_joint(u, d, p).lower; }, dt, p,
      std::move(lower_kinks));
  band.upper = marginalize(
      [&p](double u, double d) { return ps_bounds_joint(u, d, p).upper; }, dt, p,
      std::move(upper_kinks));
  return band;
}

AsymmetryBand ps_bounds_marginal_closed(double dt, const ModelParams& p) {
  require_non_negative(dt, "dt");
  const double c = std::cos(p.dm * dt);
  const double s = std::sin(p.dm * dt);
  const double k = 2.0 / p.tau;
  AsymmetryBand band;
  band.upper = 1.0 - std::hypot(1.0 - c, s) * weighted_abs_cos(k, p.dm, std::atan2(s, 1.0 - c));
  band.lower = std::hypot(1.0 + c, s) * weighted_abs_cos(k, p.dm, -std::atan2(s, 1.0 + c)) - 1.0;
  return band;
}

double asym_decohered(double dt, const ModelParams& p) {
  if (!(p.zeta >= 0.0 && p.zeta <= 1.0)) throw ValidationError("zeta must lie in [0, 1]");
  return (1.0 - p.zeta) * asym_qm(dt, p) + p.zeta * asym_sd_marginal(dt, p);
}

}  // namespace flavent

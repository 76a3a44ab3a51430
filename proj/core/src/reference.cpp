#include "flavent/reference.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "flavent/text.hpp"

namespace flavent {

bool ReferenceCheck::pass() const { return std::abs(computed - published) <= tolerance; }

FixtureFits fit_fixture(const AsymmetrySpectrum& s, const RunConfig& cfg) {
  const FitOptions opts = cfg.fit_options();
  FixtureFits f;
  f.qm = fit_model(s, FitModel::QM, cfg.constraint, opts);
  f.sd = fit_model(s, FitModel::SD, cfg.constraint, opts);
  f.ps = fit_model(s, FitModel::PS, cfg.constraint, opts);
  f.zeta = fit_zeta(s, cfg.constraint, opts);
  f.sig_sd = significance(f.qm, f.sd);
  f.sig_ps = significance(f.qm, f.ps);
  return f;
}

std::vector<ReferenceCheck> fit_checks(const FixtureFits& f) {
  return {
      {"QM dm", 0.501, f.qm.theta_hat, 0.005},
      {"QM dm error", 0.009, f.qm.theta_err, 0.002},
      {"QM chi2", 5.2, f.qm.chi2, 1.0},
      {"SD dm", 0.419, f.sd.theta_hat, 0.010},
      {"SD chi2", 174.0, f.sd.chi2, 10.0},
      {"PS dm", 0.447, f.ps.theta_hat, 0.015},
      {"PS chi2", 31.3, f.ps.chi2, 5.0},
  };
}

std::vector<ReferenceCheck> significance_checks(const FixtureFits& f) {
  return {
      {"sigma(SD vs QM)", 13.0, f.sig_sd, 0.5},
      {"sigma(PS vs QM)", 5.1, f.sig_ps, 0.3},
  };
}

std::vector<ReferenceCheck> zeta_checks(const FixtureFits& f) {
  return {
      {"zeta", 0.029, f.zeta.theta_hat, 0.02},
      {"zeta error", 0.057, f.zeta.theta_err, 0.01},
  };
}

std::string format_checks(const std::vector<ReferenceCheck>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "quantity" << std::right << std::setw(10) << "reference"
     << std::setw(12) << "computed" << std::setw(12) << "tolerance" << "  status\n";
  for (const auto& r : rows)
    os << std::left << std::setw(18) << r.quantity << std::right << std::setw(10)
       << format_fixed(r.published, 3) << std::setw(12) << format_fixed(r.computed, 4)
       << std::setw(12) << ("+-" + format_fixed(r.tolerance, 3)) << "  "
       << (r.pass() ? "PASS" : "FAIL") << '\n';
  return os.str();
}

}  // namespace flavent

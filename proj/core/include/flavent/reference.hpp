#pragma once

// Published fit results on the shipped spectrum and the tolerances used to
// compare against them.

#include <string>
#include <vector>

#include "flavent/analysis.hpp"
#include "flavent/config.hpp"
#include "flavent/fitkit.hpp"

namespace flavent {

struct ReferenceCheck {
  std::string quantity;
  double published = 0.0;
  double computed = 0.0;
  double tolerance = 0.0;

  bool pass() const;
};

struct FixtureFits {
  FitResult qm;
  FitResult sd;
  FitResult ps;
  FitResult zeta;
  double sig_sd = 0.0;  // sqrt(chi2_SD - chi2_QM)
  double sig_ps = 0.0;  // sqrt(chi2_PS - chi2_QM)
};

FixtureFits fit_fixture(const AsymmetrySpectrum& s, const RunConfig& cfg);

/// Rows: QM dm, error, chi2; SD dm, chi2; PS dm, chi2.
std::vector<ReferenceCheck> fit_checks(const FixtureFits& f);
/// Rows: SD and PS significance over QM.
std::vector<ReferenceCheck> significance_checks(const FixtureFits& f);
/// Rows: zeta and its error.
std::vector<ReferenceCheck> zeta_checks(const FixtureFits& f);

/// Fixed-width reference-vs-computed table with PASS/FAIL per row.
std::string format_checks(const std::vector<ReferenceCheck>& rows);

}  // namespace flavent

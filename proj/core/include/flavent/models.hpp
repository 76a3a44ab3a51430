#pragma once

// Time-dependent flavour asymmetry of Upsilon(4S) -> B0 B0bar pairs under
// three hypotheses: entangled quantum mechanics (QM), spontaneous and
// immediate disentanglement (SD), and the Pompili-Selleri (PS) family of
// local-realistic models, plus a QM/SD admixture.
//
// Times are proper times in ps, frequencies in ps^-1. All functions are pure.

#include <functional>
#include <string_view>
#include <vector>

namespace flavent {

struct ModelParams {
  double dm = 0.507;   // mixing frequency, ps^-1
  double tau = 1.53;   // B0 lifetime, ps
  double zeta = 0.0;   // decoherent (SD) fraction

  /// Throws ValidationError unless dm > 0, tau > 0 and 0 <= zeta <= 1.
  void validate() const;
};

enum class FlavourClass { OF, SF };

std::string_view to_string(FlavourClass cls);
FlavourClass flavour_class_from_string(std::string_view s);

struct AsymmetryBand {
  double lower = 0.0;
  double upper = 0.0;
};

/// Joint asymmetry as a function of (t_min, dt), used by marginalize().
using JointAsymmetry = std::function<double(double t_min, double dt)>;

/// Rate of flavour-specific pair decays at proper-time difference dt:
/// exp(-dt/tau)/(4 tau) * (1 +- cos(dm dt)), + for OF, - for SF.
double rate_qm(double dt, FlavourClass cls, const ModelParams& p);

/// cos(dm dt).
double asym_qm(double dt, const ModelParams& p);

/// cos(dm t1) cos(dm t2).
double asym_sd_joint(double t1, double t2, const ModelParams& p);

/// Average of joint(t_min, dt) over t_min with the pair-decay weight
/// exp(-2 t_min / tau), by adaptive Gauss-Kronrod quadrature on [0, 40 tau]
/// to 1e-9 absolute. `breakpoints` are t_min values where joint has kinks;
/// the integration range is split there. Throws NumericalError (with the
/// achieved error estimate) if the target is missed.
double marginalize(const JointAsymmetry& joint, double dt, const ModelParams& p,
                   std::vector<double> breakpoints = {});

/// Closed form of marginalize(asym_sd_joint) at fixed dt.
double asym_sd_marginal(double dt, const ModelParams& p);

/// Pointwise PS bounds at (t_min, dt).
AsymmetryBand ps_bounds_joint(double t_min, double dt, const ModelParams& p);

/// PS bounds marginalized over t_min at fixed dt.
AsymmetryBand ps_bounds_marginal(double dt, const ModelParams& p);

/// Same bounds from the exact series for the exponentially weighted average
/// of |cos(dm t_min - phi)| over t_min in [0, inf). Agrees with
/// ps_bounds_marginal to quadrature accuracy at a fraction of the cost.
AsymmetryBand ps_bounds_marginal_closed(double dt, const ModelParams& p);

/// (1 - zeta) asym_qm + zeta asym_sd_marginal.
double asym_decohered(double dt, const ModelParams& p);

}  // namespace flavent

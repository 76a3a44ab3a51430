#pragma once

// Seeded toy Monte Carlo of B-pair decays with a parameterized detector.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "flavent/event.hpp"
#include "flavent/models.hpp"
#include "flavent/rng.hpp"

namespace flavent {

inline constexpr double kSpeedOfLight = 299.792458;  // um/ps
inline constexpr double kBetaGamma = 0.425;
inline constexpr double kBoostLength = kBetaGamma * kSpeedOfLight;  // um of dz per ps of dt

enum class GenModel { QM, SD, PS_MAX, PS_MIN, DECOHERED };

std::string_view to_string(GenModel m);
GenModel gen_model_from_string(std::string_view s);

/// Joint asymmetry A(t1, t2) the generator uses for `model`.
double joint_asymmetry(GenModel model, double t1, double t2, const ModelParams& p);

struct DetectorConfig {
  double resolution_sigma = 100.0;   // um, baseline dz resolution
  double extra_smear_sigma = 46.0;   // um, MC tuning term
  double mistag_fraction = 0.015;

  void validate() const;
  double total_sigma() const;
};

enum class ShapeKind { Exponential, Flat };

/// dt density of a background category on [0, range_hi]. With dm > 0 the
/// OF (SF) component is modulated by 1 + cos(dm dt) (1 - cos(dm dt)).
struct BackgroundShape {
  ShapeKind kind = ShapeKind::Exponential;
  double tau = 1.53;
  double dm = 0.0;
  double range_hi = 20.0;

  void validate() const;
  /// Unnormalized density for the given class.
  double density(double dt, FlavourClass cls) const;
};

struct BackgroundComponent {
  Category category = Category::dstar_fake;
  double n_of = 0.0;
  double n_sf = 0.0;
  double err_of = 0.0;
  double err_sf = 0.0;
  BackgroundShape shape;
};

struct BackgroundConfig {
  std::vector<BackgroundComponent> components;
  bool fixed_counts = false;  // llround(yield) instead of Poisson(yield)

  void validate() const;
  double total_of() const;
  double total_sf() const;

  /// Category yields and errors of the published selection.
  static BackgroundConfig nominal(double tau = 1.53);
};

struct PairDraw {
  double t1 = 0.0;
  double t2 = 0.0;
  FlavourClass cls = FlavourClass::OF;
};

/// Decay times from exp(-(t1+t2)/tau)/tau^2, class OF with probability
/// (1 + A(t1, t2))/2. Throws NumericalError if A leaves [-1, 1].
PairDraw sample_pair(GenModel model, const ModelParams& p, Rng& rng);

/// Truth-only signal record for a drawn pair.
EventRecord make_signal_event(const PairDraw& pair);

/// Gaussian dz smearing, |dz| folding, and (signal only) mistag.
EventRecord apply_detector(EventRecord e, const DetectorConfig& d, Rng& rng);

/// Draw a dt from `shape` for class `cls` by accept-reject.
double sample_background_dt(const BackgroundShape& shape, FlavourClass cls, Rng& rng);

/// Appends background events (smeared by `d`, never mistagged) after `signal`.
/// New records are labelled with `stream` and consecutive indices.
std::vector<EventRecord> inject_backgrounds(std::vector<EventRecord> signal,
                                            const BackgroundConfig& b,
                                            const DetectorConfig& d, Rng& rng,
                                            std::uint32_t stream);

struct GenerationRequest {
  GenModel model = GenModel::QM;
  ModelParams params;
  DetectorConfig detector;
  BackgroundConfig backgrounds;
  std::size_t signal_events = 0;
  std::uint64_t seed = 0;
  unsigned streams = 1;
  unsigned threads = 1;
  bool with_backgrounds = true;
  std::uint64_t purpose = 0;
};

/// Signal events split across `streams` independent sub-streams, then
/// backgrounds on stream index `streams`. Output is in canonical
/// (stream, index) order and independent of `threads`.
std::vector<EventRecord> generate_events(const GenerationRequest& req);

}  // namespace flavent

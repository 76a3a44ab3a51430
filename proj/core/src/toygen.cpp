#include "flavent/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "flavent/error.hpp"
#include "flavent/parallel.hpp"

namespace flavent {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::signal: return "signal";
    case Category::dstar_fake: return "dstar_fake";
    case Category::wrong_combination: return "wrong_combination";
    case Category::dss_charged: return "dss_charged";
  }
  return "?";
}

Category category_from_string(std::string_view s) {
  if (s == "signal") return Category::signal;
  if (s == "dstar_fake") return Category::dstar_fake;
  if (s == "wrong_combination") return Category::wrong_combination;
  if (s == "dss_charged") return Category::dss_charged;
  throw ValidationError("unknown event category '" + std::string(s) + "'");
}

std::string_view to_string(GenModel m) {
  switch (m) {
    case GenModel::QM: return "QM";
    case GenModel::SD: return "SD";
    case GenModel::PS_MAX: return "PS_MAX";
    case GenModel::PS_MIN: return "PS_MIN";
    case GenModel::DECOHERED: return "DECOHERED";
  }
  return "?";
}

GenModel gen_model_from_string(std::string_view s) {
  if (s == "QM") return GenModel::QM;
  if (s == "SD") return GenModel::SD;
  if (s == "PS_MAX" || s == "PS_boundary_max") return GenModel::PS_MAX;
  if (s == "PS_MIN" || s == "PS_boundary_min") return GenModel::PS_MIN;
  if (s == "DECOHERED") return GenModel::DECOHERED;
  throw ValidationError("unknown generator model '" + std::string(s) + "'");
}

double joint_asymmetry(GenModel model, double t1, double t2, const ModelParams& p) {
  const double dt = std::abs(t1 - t2);
  const double t_min = std::min(t1, t2);
  switch (model) {
    case GenModel::QM: return std::cos(p.dm * dt);
    case GenModel::SD: return asym_sd_joint(t1, t2, p);
    case GenModel::PS_MAX: return ps_bounds_joint(t_min, dt, p).upper;
    case GenModel::PS_MIN: return ps_bounds_joint(t_min, dt, p).lower;
    case GenModel::DECOHERED:
      return (1.0 - p.zeta) * std::cos(p.dm * dt) + p.zeta * asym_sd_joint(t1, t2, p);
  }
  return 0.0;
}

void DetectorConfig::validate() const {
  if (!(resolution_sigma >= 0.0)) throw ValidationError("detector resolution must be >= 0");
  if (!(extra_smear_sigma >= 0.0)) throw ValidationError("detector extra smearing must be >= 0");
  if (!(mistag_fraction >= 0.0 && mistag_fraction < 0.5))
    throw ValidationError("mistag fraction must lie in [0, 0.5)");
}

double DetectorConfig::total_sigma() const { return std::hypot(resolution_sigma, extra_smear_sigma); }

void BackgroundShape::validate() const {
  if (!(range_hi > 0.0)) throw ValidationError("background shape range must be > 0");
  if (kind == ShapeKind::Exponential && !(tau > 0.0))
    throw ValidationError("background shape tau must be > 0");
  if (!(dm >= 0.0)) throw ValidationError("background shape dm must be >= 0");
}

double BackgroundShape::density(double dt, FlavourClass cls) const {
  if (dt < 0.0 || dt > range_hi) return 0.0;
  double base = kind == ShapeKind::Exponential ? std::exp(-dt / tau) : 1.0;
  if (dm > 0.0) base *= 1.0 + (cls == FlavourClass::OF ? 1.0 : -1.0) * std::cos(dm * dt);
  return base;
}

void BackgroundConfig::validate() const {
  for (const auto& c : components) {
    if (c.category == Category::signal)
      throw ValidationError("background component cannot use the signal category");
    if (!(c.n_of >= 0.0 && c.n_sf >= 0.0))
      throw ValidationError("background yield for " + std::string(to_string(c.category)) +
                            " must be >= 0");
    if (!(c.err_of >= 0.0 && c.err_sf >= 0.0))
      throw ValidationError("background yield error for " +
                            std::string(to_string(c.category)) + " must be >= 0");
    c.shape.validate();
  }
}

double BackgroundConfig::total_of() const {
  double s = 0.0;
  for (const auto& c : components) s += c.n_of;
  return s;
}

double BackgroundConfig::total_sf() const {
  double s = 0.0;
  for (const auto& c : components) s += c.n_sf;
  return s;
}

BackgroundConfig BackgroundConfig::nominal(double tau) {
  BackgroundShape shape;
  shape.tau = tau;
  BackgroundConfig b;
  b.components = {
      {Category::dstar_fake, 126.0, 54.0, 6.0, 4.0, shape},
      {Category::wrong_combination, 78.0, 237.0, 9.0, 15.0, shape},
      // 255.5 +- 16.0 in total, split 254.0 OF / 1.5 SF; error shared pro rata.
      {Category::dss_charged, 254.0, 1.5, 254.0 * 16.0 / 255.5, 1.5 * 16.0 / 255.5, shape},
  };
  return b;
}

PairDraw sample_pair(GenModel model, const ModelParams& p, Rng& rng) {
  std::exponential_distribution<double> decay(1.0 / p.tau);
  std::uniform_real_distribution<double> flat(0.0, 1.0);
  PairDraw out;
  out.t1 = decay(rng);
  out.t2 = decay(rng);
  const double a = joint_asymmetry(model, out.t1, out.t2, p);
  if (!(a >= -1.0 - 1e-12 && a <= 1.0 + 1e-12)) {
    std::ostringstream os;
    os << "asymmetry " << a << " outside [-1, 1] for model " << to_string(model);
    throw NumericalError(os.str());
  }
  out.cls = flat(rng) < 0.5 * (1.0 + a) ? FlavourClass::OF : FlavourClass::SF;
  return out;
}

EventRecord make_signal_event(const PairDraw& pair) {
  EventRecord e;
  e.t1 = pair.t1;
  e.t2 = pair.t2;
  e.dt_true = std::abs(pair.t1 - pair.t2);
  e.cls_true = pair.cls;
  e.cls_assigned = pair.cls;
  e.dz_rec = kBoostLength * e.dt_true;
  e.dt_rec = e.dt_true;
  e.category = Category::signal;
  return e;
}

EventRecord apply_detector(EventRecord e, const DetectorConfig& d, Rng& rng) {
  const double sigma = d.total_sigma();
  e.dz_rec = kBoostLength * e.dt_true;
  if (sigma > 0.0) {
    std::normal_distribution<double> smear(0.0, sigma);
    e.dz_rec += smear(rng);
  }
  e.dt_rec = std::abs(e.dz_rec) / kBoostLength;
  e.cls_assigned = e.cls_true;
  if (e.category == Category::signal && d.mistag_fraction > 0.0) {
    std::uniform_real_distribution<double> flat(0.0, 1.0);
    if (flat(rng) < d.mistag_fraction)
      e.cls_assigned = e.cls_true == FlavourClass::OF ? FlavourClass::SF : FlavourClass::OF;
  }
  return e;
}

double sample_background_dt(const BackgroundShape& shape, FlavourClass cls, Rng& rng) {
  // Envelope: exp(-dt/tau) (or 1) times the maximum modulation factor.
  const double modulation = shape.dm > 0.0 ? 2.0 : 1.0;
  std::uniform_real_distribution<double> flat(0.0, 1.0);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    double dt;
    double envelope;
    if (shape.kind == ShapeKind::Exponential) {
      // exponential truncated to [0, range_hi] by inversion
      const double cut = -std::expm1(-shape.range_hi / shape.tau);
      dt = -shape.tau * std::log1p(-flat(rng) * cut);
      envelope = modulation * std::exp(-dt / shape.tau);
    } else {
      dt = flat(rng) * shape.range_hi;
      envelope = modulation;
    }
    if (flat(rng) * envelope <= shape.density(dt, cls)) return dt;
  }
  throw NumericalError("background accept-reject failed to converge");
}

std::vector<EventRecord> inject_backgrounds(std::vector<EventRecord> signal,
                                            const BackgroundConfig& b,
                                            const DetectorConfig& d, Rng& rng,
                                            std::uint32_t stream) {
  b.validate();
  std::uint64_t index = 0;
  for (const auto& comp : b.components) {
    for (FlavourClass cls : {FlavourClass::OF, FlavourClass::SF}) {
      const double expected = cls == FlavourClass::OF ? comp.n_of : comp.n_sf;
      long long count = 0;
      if (b.fixed_counts) {
        count = std::llround(expected);
      } else if (expected > 0.0) {
        std::poisson_distribution<long long> pois(expected);
        count = pois(rng);
      }
      for (long long i = 0; i < count; ++i) {
        EventRecord e;
        e.dt_true = sample_background_dt(comp.shape, cls, rng);
        e.t1 = e.dt_true;
        e.t2 = 0.0;
        e.cls_true = cls;
        e.category = comp.category;
        e = apply_detector(e, d, rng);
        e.stream = stream;
        e.index = index++;
        signal.push_back(e);
      }
    }
  }
  return signal;
}

std::vector<EventRecord> generate_events(const GenerationRequest& req) {
  req.params.validate();
  req.detector.validate();
  if (req.streams == 0) throw ValidationError("streams must be >= 1");
  if (req.with_backgrounds) req.backgrounds.validate();

  const unsigned streams = req.streams;
  std::vector<std::vector<EventRecord>> per_stream(streams);
  auto run_stream = [&](unsigned k) {
    const std::size_t begin = req.signal_events * k / streams;
    const std::size_t end = req.signal_events * (k + 1) / streams;
    Rng rng = make_stream(req.seed, k, req.purpose);
    auto& out = per_stream[k];
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      EventRecord e = make_signal_event(sample_pair(req.model, req.params, rng));
      e = apply_detector(e, req.detector, rng);
      e.stream = k;
      e.index = i - begin;
      out.push_back(e);
    }
  };

  parallel_for(streams, req.threads, [&](std::size_t k) { run_stream(static_cast<unsigned>(k)); });

  std::vector<EventRecord> events;
  events.reserve(req.signal_events);
  for (auto& s : per_stream) events.insert(events.end(), s.begin(), s.end());
  if (req.with_backgrounds) {
    Rng rng = make_stream(req.seed, streams, req.purpose);
    events = inject_backgrounds(std::move(events), req.backgrounds, req.detector, rng, streams);
  }
  return events;
}

}  // namespace flavent

#include "flavent/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "flavent/error.hpp"
#include "flavent/rng.hpp"

namespace flavent {

namespace {

constexpr std::uint64_t kBootstrapPurpose = 0xB0075;
constexpr std::uint64_t kTemplatePurpose = 0x7E3B1A7E;
constexpr int kBootstrapResamples = 4000;

void require_same_binning(const Binning& a, const Binning& b, const char* what) {
  if (!(a == b)) throw ValidationError(std::string(what) + ": mismatched binning");
}

double simple_asymmetry(double of, double sf) {
  const double n = of + sf;
  return n != 0.0 ? (of - sf) / n : 0.0;
}

// Spread of the asymmetry under binomial resampling of n events, using the
// Jeffreys-smoothed OF fraction so an empty class still fluctuates.
double bootstrap_error(double n_of, double n_sf, Rng& rng) {
  const auto n = static_cast<long long>(std::llround(n_of + n_sf));
  if (n <= 0) return 0.0;
  const double p = (n_of + 0.5) / (static_cast<double>(n) + 1.0);
  std::binomial_distribution<long long> draw(n, p);
  double sum = 0.0;
  double sum2 = 0.0;
  for (int r = 0; r < kBootstrapResamples; ++r) {
    const double of = static_cast<double>(draw(rng));
    const double a = (2.0 * of - static_cast<double>(n)) / static_cast<double>(n);
    sum += a;
    sum2 += a * a;
  }
  const double mean = sum / kBootstrapResamples;
  return std::sqrt(std::max(0.0, sum2 / kBootstrapResamples - mean * mean));
}

}  // namespace

BinnedCounts BinnedCounts::zeros(const Binning& binning) {
  BinnedCounts c;
  c.binning = binning;
  const std::size_t n = binning.size();
  c.n_of.assign(n, 0.0);
  c.n_sf.assign(n, 0.0);
  c.var_of.assign(n, 0.0);
  c.var_sf.assign(n, 0.0);
  c.cov.assign(n, 0.0);
  return c;
}

std::vector<bool> BinnedCounts::negative_bins() const {
  std::vector<bool> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = n_of[i] < 0.0 || n_sf[i] < 0.0;
  return out;
}

double AsymmetrySpectrum::total_error(std::size_t i) const {
  return std::hypot(stat_err[i], syst_err[i]);
}

void AsymmetrySpectrum::set_systematic(const std::string& source, std::vector<double> values) {
  if (values.size() != a.size())
    throw ValidationError("systematic '" + source + "' has the wrong number of bins");
  auto it = std::find_if(syst_breakdown.begin(), syst_breakdown.end(),
                         [&](const auto& s) { return s.first == source; });
  if (it != syst_breakdown.end())
    it->second = std::move(values);
  else
    syst_breakdown.emplace_back(source, std::move(values));
  recompute_syst();
}

const std::vector<double>* AsymmetrySpectrum::systematic(const std::string& source) const {
  for (const auto& [name, values] : syst_breakdown)
    if (name == source) return &values;
  return nullptr;
}

void AsymmetrySpectrum::recompute_syst() {
  syst_err.assign(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double s2 = 0.0;
    for (const auto& [name, values] : syst_breakdown) s2 += values[i] * values[i];
    syst_err[i] = std::sqrt(s2);
  }
}

BinnedCounts bin_events(std::span<const EventRecord> events, const Binning& binning,
                        DtSource which) {
  BinnedCounts c = BinnedCounts::zeros(binning);
  for (const auto& e : events) {
    const bool reco = which == DtSource::Reconstructed;
    const double dt = reco ? e.dt_rec : e.dt_true;
    const FlavourClass cls = reco ? e.cls_assigned : e.cls_true;
    const auto bin = binning.find(dt);
    if (!bin) {
      (cls == FlavourClass::OF ? c.overflow_of : c.overflow_sf) += 1.0;
      continue;
    }
    (cls == FlavourClass::OF ? c.n_of : c.n_sf)[*bin] += 1.0;
  }
  c.var_of = c.n_of;
  c.var_sf = c.n_sf;
  return c;
}

std::vector<BackgroundTemplate> build_background_templates(const BackgroundConfig& b,
                                                           const DetectorConfig& d,
                                                           const Binning& binning,
                                                           std::uint64_t seed,
                                                           std::size_t events_per_template) {
  b.validate();
  d.validate();
  std::vector<BackgroundTemplate> out;
  std::uint64_t stream = 0;
  for (const auto& comp : b.components) {
    BackgroundTemplate t;
    t.category = comp.category;
    t.n_of = comp.n_of;
    t.n_sf = comp.n_sf;
    t.err_of = comp.err_of;
    t.err_sf = comp.err_sf;
    t.expected = BinnedCounts::zeros(binning);
    t.expected.poisson = false;
    Rng rng = make_stream(seed, stream++, kTemplatePurpose);
    for (FlavourClass cls : {FlavourClass::OF, FlavourClass::SF}) {
      const double yield = cls == FlavourClass::OF ? comp.n_of : comp.n_sf;
      auto& target = cls == FlavourClass::OF ? t.expected.n_of : t.expected.n_sf;
      if (yield <= 0.0) continue;
      std::vector<double> hist(binning.size(), 0.0);
      for (std::size_t i = 0; i < events_per_template; ++i) {
        EventRecord e;
        e.dt_true = sample_background_dt(comp.shape, cls, rng);
        e.cls_true = cls;
        e.category = comp.category;
        e = apply_detector(e, d, rng);
        if (auto bin = binning.find(e.dt_rec)) hist[*bin] += 1.0;
      }
      const double scale = yield / static_cast<double>(events_per_template);
      for (std::size_t i = 0; i < hist.size(); ++i) target[i] = hist[i] * scale;
    }
    out.push_back(std::move(t));
  }
  return out;
}

SubtractionResult subtract_background(const BinnedCounts& c,
                                      std::span<const BackgroundTemplate> bkg) {
  SubtractionResult r;
  r.counts = c;
  r.counts.poisson = c.poisson && bkg.empty();
  for (const auto& t : bkg) {
    require_same_binning(c.binning, t.expected.binning, "subtract_background");
    for (std::size_t i = 0; i < c.size(); ++i) {
      r.counts.n_of[i] -= t.expected.n_of[i];
      r.counts.n_sf[i] -= t.expected.n_sf[i];
    }
  }

  // Yield variations, one category and class at a time, summed in quadrature.
  r.syst.assign(c.size(), 0.0);
  for (const auto& t : bkg) {
    for (FlavourClass cls : {FlavourClass::OF, FlavourClass::SF}) {
      const double yield = cls == FlavourClass::OF ? t.n_of : t.n_sf;
      const double err = cls == FlavourClass::OF ? t.err_of : t.err_sf;
      if (yield <= 0.0 || err <= 0.0) continue;
      const auto& shape = cls == FlavourClass::OF ? t.expected.n_of : t.expected.n_sf;
      for (std::size_t i = 0; i < c.size(); ++i) {
        const double nominal = simple_asymmetry(r.counts.n_of[i], r.counts.n_sf[i]);
        double worst = 0.0;
        for (double sign : {+1.0, -1.0}) {
          const double delta = sign * err / yield * shape[i];
          double of = r.counts.n_of[i];
          double sf = r.counts.n_sf[i];
          (cls == FlavourClass::OF ? of : sf) -= delta;
          if (of + sf <= 0.0) continue;
          worst = std::max(worst, std::abs(simple_asymmetry(of, sf) - nominal));
        }
        r.syst[i] = std::hypot(r.syst[i], worst);
      }
    }
  }
  r.negative = r.counts.negative_bins();
  return r;
}

AsymmetrySpectrum asymmetry(const BinnedCounts& c, std::uint64_t bootstrap_seed) {
  AsymmetrySpectrum s;
  s.binning = c.binning;
  const std::size_t n = c.size();
  s.a.assign(n, 0.0);
  s.stat_err.assign(n, 0.0);
  s.syst_err.assign(n, 0.0);
  s.degenerate.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const double of = c.n_of[i];
    const double sf = c.n_sf[i];
    const double total = of + sf;
    if (!(total > 0.0)) {
      std::ostringstream os;
      os << "asymmetry: bin " << i + 1 << " has no events (n_of + n_sf = " << total << ")";
      throw ValidationError(os.str());
    }
    s.a[i] = (of - sf) / total;
    const double g_of = 2.0 * sf / (total * total);
    const double g_sf = -2.0 * of / (total * total);
    const double var =
        g_of * g_of * c.var_of[i] + g_sf * g_sf * c.var_sf[i] + 2.0 * g_of * g_sf * c.cov[i];
    s.stat_err[i] = std::sqrt(std::max(0.0, var));
    if (s.stat_err[i] == 0.0 || (c.poisson && (of == 0.0 || sf == 0.0))) {
      Rng rng = make_stream(bootstrap_seed, i, kBootstrapPurpose);
      s.stat_err[i] = bootstrap_error(std::max(of, 0.0), std::max(sf, 0.0), rng);
      s.degenerate[i] = true;
    }
  }
  return s;
}

AsymmetrySpectrum correct_mistag(const AsymmetrySpectrum& a_obs, double w, double w_err) {
  if (!(w >= 0.0 && w < 0.5)) throw ValidationError("mistag fraction must lie in [0, 0.5)");
  if (!(w_err >= 0.0)) throw ValidationError("mistag error must be >= 0");
  if (!(w + w_err < 0.5)) throw ValidationError("mistag fraction + error must stay below 0.5");
  const double dilution = 1.0 - 2.0 * w;
  AsymmetrySpectrum out = a_obs;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.a[i] = a_obs.a[i] / dilution;
    out.stat_err[i] = a_obs.stat_err[i] / dilution;
  }
  for (auto& [name, values] : out.syst_breakdown)
    for (double& v : values) v /= dilution;
  if (out.stat_cov) *out.stat_cov /= dilution * dilution;

  std::vector<double> wrong_tags(out.size(), 0.0);
  if (w_err > 0.0) {
    const double d_hi = 1.0 - 2.0 * (w + w_err);
    const double d_lo = 1.0 - 2.0 * std::max(0.0, w - w_err);
    for (std::size_t i = 0; i < out.size(); ++i)
      wrong_tags[i] = std::max(std::abs(a_obs.a[i] / d_hi - out.a[i]),
                               std::abs(a_obs.a[i] / d_lo - out.a[i]));
  }
  out.set_systematic("wrong_tags", std::move(wrong_tags));
  return out;
}

BinnedCounts correct_mistag_counts(const BinnedCounts& c, double w) {
  if (!(w >= 0.0 && w < 0.5)) throw ValidationError("mistag fraction must lie in [0, 0.5)");
  const double d = 1.0 - 2.0 * w;
  const double keep = (1.0 - w) / d;
  const double flip = -w / d;
  BinnedCounts out = c;
  out.poisson = c.poisson && w == 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    out.n_of[i] = keep * c.n_of[i] + flip * c.n_sf[i];
    out.n_sf[i] = keep * c.n_sf[i] + flip * c.n_of[i];
    // [keep flip; flip keep] * [[vo c];[c vs]] * transpose
    out.var_of[i] = keep * keep * c.var_of[i] + flip * flip * c.var_sf[i] + 2 * keep * flip * c.cov[i];
    out.var_sf[i] = flip * flip * c.var_of[i] + keep * keep * c.var_sf[i] + 2 * keep * flip * c.cov[i];
    out.cov[i] = keep * flip * (c.var_of[i] + c.var_sf[i]) + (keep * keep + flip * flip) * c.cov[i];
  }
  return out;
}

}  // namespace flavent

#include "flavent/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flavent/error.hpp"
#include "flavent/hash.hpp"
#include "flavent/text.hpp"

namespace flavent {

namespace {

constexpr const char* kSourceOrder[] = {"event_sel", "bkg_sub", "wrong_tags", "deconvolution"};

void order_sources(AsymmetrySpectrum& s) {
  const auto rank = [](const std::string& name) {
    for (std::size_t i = 0; i < std::size(kSourceOrder); ++i)
      if (name == kSourceOrder[i]) return i;
    return std::size(kSourceOrder);
  };
  std::stable_sort(s.syst_breakdown.begin(), s.syst_breakdown.end(),
                   [&](const auto& x, const auto& y) { return rank(x.first) < rank(y.first); });
  s.recompute_syst();
}

std::vector<double> unfolded_a(const BinnedCounts& corrected, const ResponseMatrix& of,
                               const ResponseMatrix& sf, const UnfoldConfig& cfg) {
  return unfolded_asymmetry(dsvd_unfold(corrected, of, sf, cfg)).a;
}

void accumulate_max(std::vector<double>& worst, const std::vector<double>& a,
                    const std::vector<double>& nominal) {
  for (std::size_t i = 0; i < worst.size(); ++i)
    worst[i] = std::max(worst[i], std::abs(a[i] - nominal[i]));
}

}  // namespace

std::vector<EventRecord> generate_data(const RunConfig& cfg, GenModel model,
                                       std::size_t signal_events, std::uint64_t seed) {
  GenerationRequest req;
  req.model = model;
  req.params = cfg.params;
  req.detector = cfg.detector;
  req.backgrounds = cfg.backgrounds;
  req.with_backgrounds = cfg.backgrounds_enabled;
  req.signal_events = signal_events;
  req.seed = seed;
  req.streams = cfg.streams;
  req.threads = cfg.threads;
  req.purpose = kPurposeData;
  return generate_events(req);
}

std::vector<EventRecord> generate_mc(const RunConfig& cfg, const DetectorConfig& detector,
                                     std::uint64_t seed) {
  GenerationRequest req;
  req.model = GenModel::QM;
  req.params = cfg.params;
  req.params.zeta = 0.0;
  req.detector = detector;
  req.with_backgrounds = false;
  req.signal_events =
      static_cast<std::size_t>(std::llround(cfg.mc_factor * static_cast<double>(cfg.signal_events)));
  req.seed = seed;
  req.streams = cfg.streams;
  req.threads = cfg.threads;
  req.purpose = kPurposeMc;
  return generate_events(req);
}

std::vector<BackgroundTemplate> background_templates(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.backgrounds_enabled) return {};
  return build_background_templates(cfg.backgrounds, cfg.detector, cfg.binning, seed,
                                    cfg.template_events);
}

Analysis analyze(const BinnedCounts& raw, const RunConfig& cfg,
                 const std::vector<BackgroundTemplate>& templates) {
  if (!(raw.binning == cfg.binning)) throw ValidationError("counts binning differs from the configured binning");
  Analysis an;
  an.raw = raw;
  an.subtracted = subtract_background(raw, templates);
  const double w = cfg.detector.mistag_fraction;
  an.corrected = correct_mistag_counts(an.subtracted.counts, w);
  return an;
}

AsymmetrySpectrum reco_spectrum(const Analysis& an, const RunConfig& cfg, std::uint64_t seed) {
  AsymmetrySpectrum observed = asymmetry(an.subtracted.counts, seed);
  observed.set_systematic("bkg_sub", an.subtracted.syst);
  AsymmetrySpectrum s = correct_mistag(observed, cfg.detector.mistag_fraction, cfg.mistag_error);
  if (!cfg.event_selection.empty()) s.set_systematic("event_sel", cfg.event_selection);
  order_sources(s);
  return s;
}

Unfolding unfold_analysis(const Analysis& an, const RunConfig& cfg,
                          const std::vector<BackgroundTemplate>& templates,
                          const std::pair<ResponseMatrix, ResponseMatrix>& response,
                          const BiasCorrection* bias, std::vector<double> smear_syst) {
  const auto& [of, sf] = response;
  const std::size_t n = cfg.binning.size();
  const double w = cfg.detector.mistag_fraction;

  Unfolding u;
  u.result = dsvd_unfold(an.corrected, of, sf, cfg.unfold);
  u.spectrum = unfolded_asymmetry(u.result);
  const std::vector<double> nominal = u.spectrum.a;

  // Background yields moved by their errors, one category and class at a time.
  std::vector<double> bkg(n, 0.0);
  for (const auto& t : templates) {
    for (FlavourClass cls : {FlavourClass::OF, FlavourClass::SF}) {
      const double yield = cls == FlavourClass::OF ? t.n_of : t.n_sf;
      const double err = cls == FlavourClass::OF ? t.err_of : t.err_sf;
      if (yield <= 0.0 || err <= 0.0) continue;
      const auto& shape = cls == FlavourClass::OF ? t.expected.n_of : t.expected.n_sf;
      std::vector<double> worst(n, 0.0);
      for (double sign : {+1.0, -1.0}) {
        BinnedCounts varied = an.subtracted.counts;
        auto& target = cls == FlavourClass::OF ? varied.n_of : varied.n_sf;
        for (std::size_t i = 0; i < n; ++i) target[i] -= sign * err / yield * shape[i];
        accumulate_max(worst, unfolded_a(correct_mistag_counts(varied, w), of, sf, cfg.unfold), nominal);
      }
      for (std::size_t i = 0; i < n; ++i) bkg[i] = std::hypot(bkg[i], worst[i]);
    }
  }

  std::vector<double> tags(n, 0.0);
  if (cfg.mistag_error > 0.0) {
    for (double wv : {w + cfg.mistag_error, std::max(0.0, w - cfg.mistag_error)})
      accumulate_max(tags, unfolded_a(correct_mistag_counts(an.subtracted.counts, wv), of, sf, cfg.unfold),
                     nominal);
  }

  u.bias_syst.assign(n, 0.0);
  if (bias) {
    if (bias->correction.size() != n) throw ValidationError("bias correction has the wrong number of bins");
    for (std::size_t i = 0; i < n; ++i) u.spectrum.a[i] -= bias->correction[i];
    u.bias_syst = bias->systematic;
  }
  if (smear_syst.empty()) smear_syst.assign(n, 0.0);
  if (smear_syst.size() != n) throw ValidationError("smearing systematic has the wrong number of bins");
  u.smear_syst = std::move(smear_syst);

  std::vector<double> deconv(n);
  for (std::size_t i = 0; i < n; ++i) deconv[i] = std::hypot(u.bias_syst[i], u.smear_syst[i]);

  if (!cfg.event_selection.empty()) u.spectrum.set_systematic("event_sel", cfg.event_selection);
  u.spectrum.set_systematic("bkg_sub", std::move(bkg));
  u.spectrum.set_systematic("wrong_tags", std::move(tags));
  u.spectrum.set_systematic("deconvolution", std::move(deconv));
  order_sources(u.spectrum);
  return u;
}

std::vector<double> smearing_systematic(const Analysis& an, const RunConfig& cfg,
                                        std::uint64_t seed) {
  const ResponseBuilder build = [&](const DetectorConfig& d) {
    const auto mc = generate_mc(cfg, d, seed);
    return build_response(mc, cfg.binning);
  };
  return smear_systematic(an.corrected, build, cfg.detector, cfg.smear_delta,
                          cfg.smear_variation, cfg.unfold);
}

std::vector<double> model_truth(GenModel model, const RunConfig& cfg) {
  std::vector<double> out;
  const auto predict = [&](FitModel m) {
    return bin_predictions(m, cfg.params, cfg.binning, BinAveraging::RateWeighted);
  };
  switch (model) {
    case GenModel::QM:
      for (const auto& b : predict(FitModel::QM)) out.push_back(b.lower);
      break;
    case GenModel::SD:
      for (const auto& b : predict(FitModel::SD)) out.push_back(b.lower);
      break;
    case GenModel::DECOHERED:
      for (const auto& b : predict(FitModel::DECOHERED)) out.push_back(b.lower);
      break;
    case GenModel::PS_MAX:
      for (const auto& b : predict(FitModel::PS)) out.push_back(b.upper);
      break;
    case GenModel::PS_MIN:
      for (const auto& b : predict(FitModel::PS)) out.push_back(b.lower);
      break;
  }
  return out;
}

FitSummary fit_all(const AsymmetrySpectrum& s, const RunConfig& cfg) {
  FitSummary out;
  const FitOptions opts = cfg.fit_options();
  for (FitModel m : cfg.fit_models) {
    if (m == FitModel::LIFETIME) throw ValidationError("LIFETIME needs counts, not an asymmetry spectrum");
    out.fits.push_back(m == FitModel::DECOHERED ? fit_zeta(s, cfg.constraint, opts)
                                                : fit_model(s, m, cfg.constraint, opts));
  }
  for (const auto& a : out.fits) {
    std::vector<double> row;
    for (const auto& b : out.fits) row.push_back(significance(a, b));
    out.significance.push_back(std::move(row));
  }
  return out;
}

std::string format_fit_report(const FitSummary& f, const std::string& input_name) {
  std::ostringstream os;
  os << "# fit report\n";
  os << "input," << input_name << "\n\n";
  os << "model,parameter,theta_hat,theta_err,err_down,err_up,dm,chi2,dof,flags\n";
  for (const auto& r : f.fits) {
    const char* param = r.model == FitModel::DECOHERED ? "zeta"
                        : r.model == FitModel::LIFETIME ? "tau"
                                                        : "dm";
    std::string flags;
    for (const auto& fl : r.flags) flags += (flags.empty() ? "" : ";") + fl;
    os << to_string(r.model) << ',' << param << ',' << format_fixed(r.theta_hat, 6) << ','
       << format_fixed(r.theta_err, 6) << ',' << format_fixed(r.err_down, 6) << ','
       << format_fixed(r.err_up, 6) << ',' << format_fixed(r.dm, 6) << ','
       << format_fixed(r.chi2, 4) << ',' << r.dof << ',' << flags << '\n';
  }
  os << "\n# residuals, (a - prediction) / total error\nbin";
  for (const auto& r : f.fits) os << ',' << to_string(r.model);
  os << '\n';
  const std::size_t bins = f.fits.empty() ? 0 : f.fits.front().residuals.size();
  for (std::size_t i = 0; i < bins; ++i) {
    os << i + 1;
    for (const auto& r : f.fits) os << ',' << format_fixed(r.residuals[i], 4);
    os << '\n';
  }
  os << "\n# significance, sqrt(chi2_column - chi2_row)\nmodel";
  for (const auto& r : f.fits) os << ',' << to_string(r.model);
  os << '\n';
  for (std::size_t i = 0; i < f.fits.size(); ++i) {
    os << to_string(f.fits[i].model);
    for (double v : f.significance[i]) os << ',' << format_fixed(v, 3);
    os << '\n';
  }
  return os.str();
}

std::map<std::string, std::string> constants_record(const RunConfig& cfg) {
  return {
      {"speed_of_light_um_per_ps", format_double(kSpeedOfLight)},
      {"beta_gamma", format_double(kBetaGamma)},
      {"dm_ps", format_double(cfg.params.dm)},
      {"tau_ps", format_double(cfg.params.tau)},
      {"constraint", format_double(cfg.constraint.mean) + "+-" + format_double(cfg.constraint.sigma)},
      {"resolution_um", format_double(cfg.detector.resolution_sigma)},
      {"extra_smear_um", format_double(cfg.detector.extra_smear_sigma)},
      {"mistag", format_double(cfg.detector.mistag_fraction) + "+-" + format_double(cfg.mistag_error)},
      {"ranks", std::to_string(cfg.unfold.rank_of) + "/" + std::to_string(cfg.unfold.rank_sf)},
      {"mixing", format_double(cfg.unfold.mix_s) + "/" + format_double(cfg.unfold.mix_o)},
      {"binning", cfg.binning.to_string()},
      {"averaging", std::string(to_string(cfg.averaging))},
  };
}

std::string StageLog::to_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  j["config_sha256"] = config_hash;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["constants"] = constants;
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

}  // namespace flavent

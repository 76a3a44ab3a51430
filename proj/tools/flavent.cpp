// flavent: command-line driver for the measurement chain.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flavent/analysis.hpp"
#include "flavent/config.hpp"
#include "flavent/error.hpp"
#include "flavent/fitkit.hpp"
#include "flavent/hash.hpp"
#include "flavent/io.hpp"
#include "flavent/models.hpp"
#include "flavent/pipeline.hpp"
#include "flavent/reference.hpp"
#include "flavent/study.hpp"
#include "flavent/text.hpp"

namespace fs = std::filesystem;
using namespace flavent;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> replicas;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output = *g.out;
  if (g.replicas) cfg.replicas = *g.replicas;
  cfg.validate();
  return cfg;
}

class Stage {
 public:
  Stage(std::string name, const RunConfig& cfg) : cfg_(cfg) {
    log_.stage = std::move(name);
    log_.seed = cfg.seed;
    log_.config_hash = sha256_hex(cfg.canonical());
    log_.constants = constants_record(cfg);
    log_.notes["tool_version"] = FLAVENT_VERSION;
    fs::create_directories(cfg.output);
  }

  std::string input(const fs::path& path) {
    std::string text = read_file(path);
    log_.inputs[path.string()] = sha256_hex(text);
    return text;
  }

  void output(const std::string& name, const std::string& content) {
    const fs::path p = cfg_.output / name;
    write_file(p, content);
    log_.outputs[p.string()] = sha256_hex(content);
    std::cerr << "wrote " << p.string() << '\n';
  }

  void note(const std::string& key, const std::string& value) { log_.notes[key] = value; }

  void finish() {
    const fs::path p = cfg_.output / (log_.stage + ".log.json");
    write_file(p, log_.to_json());
  }

 private:
  const RunConfig& cfg_;
  StageLog log_;
};

template <class F>
std::string render(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

// curves

struct CurveArgs {
  double lo = 0.0;
  double hi = 20.0;
  double step = 0.1;
  std::optional<double> dm;
  std::optional<double> tau;
};

int cmd_curves(const Globals& g, const CurveArgs& a) {
  RunConfig cfg = resolve(g);
  if (a.dm) cfg.params.dm = *a.dm;
  if (a.tau) cfg.params.tau = *a.tau;
  cfg.validate();
  if (!(a.step > 0.0) || !std::isfinite(a.step)) throw ValidationError("curves: step must be > 0");
  if (!(a.hi >= a.lo) || a.lo < 0.0) throw ValidationError("curves: need 0 <= min <= max");
  const auto n = static_cast<std::size_t>(std::floor((a.hi - a.lo) / a.step + 1e-9)) + 1;

  Stage stage("curves", cfg);
  const std::string text = render([&](std::ostream& os) {
    os << "dt_ps,a_qm,a_sd,ps_min,ps_max\n";
    for (std::size_t i = 0; i < n; ++i) {
      const double dt = a.lo + static_cast<double>(i) * a.step;
      const AsymmetryBand ps = ps_bounds_marginal_closed(dt, cfg.params);
      os << format_double(dt) << ',' << format_double(asym_qm(dt, cfg.params)) << ','
         << format_double(asym_sd_marginal(dt, cfg.params)) << ',' << format_double(ps.lower)
         << ',' << format_double(ps.upper) << '\n';
    }
  });
  stage.note("rows", std::to_string(n));
  stage.output("curves.csv", text);
  stage.finish();
  return 0;
}

// generate

struct GenerateArgs {
  std::string model;
  std::optional<std::size_t> events;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const RunConfig cfg = resolve(g);
  const std::uint64_t seed = cfg.require_seed();
  const GenModel model = a.model.empty() ? cfg.generator : gen_model_from_string(a.model);
  const std::size_t n = a.events.value_or(cfg.signal_events);

  Stage stage("generate", cfg);
  const auto events = generate_data(cfg, model, n, seed);
  stage.note("model", std::string(to_string(model)));
  stage.note("signal_events", std::to_string(n));
  stage.note("total_events", std::to_string(events.size()));
  stage.output("events.csv", render([&](std::ostream& os) { write_events(os, events); }));
  stage.finish();
  return 0;
}

// analyze

int cmd_analyze(const Globals& g, const std::string& events_path) {
  const RunConfig cfg = resolve(g);
  const std::uint64_t seed = cfg.require_seed();

  Stage stage("analyze", cfg);
  std::istringstream in(stage.input(events_path));
  const auto events = read_events(in, events_path);
  const BinnedCounts raw = bin_events(events, cfg.binning, DtSource::Reconstructed);
  const Analysis an = analyze(raw, cfg, background_templates(cfg, seed));

  stage.output("counts_raw.csv", render([&](std::ostream& os) { write_counts(os, raw); }));
  stage.output("counts_corrected.csv",
               render([&](std::ostream& os) { write_counts(os, an.corrected); }));
  try {
    const AsymmetrySpectrum s = reco_spectrum(an, cfg, seed);
    stage.output("spectrum_reco.csv", render([&](std::ostream& os) { write_spectrum(os, s); }));
  } catch (const ValidationError& e) {
    stage.note("spectrum_reco", std::string("not written: ") + e.what());
    std::cerr << "warning: reconstructed-level spectrum undefined: " << e.what() << '\n';
  }
  std::size_t negative = 0;
  for (bool b : an.subtracted.negative) negative += b;
  stage.note("negative_bins_after_subtraction", std::to_string(negative));
  stage.finish();
  return 0;
}

// unfold

struct UnfoldArgs {
  std::string counts;
  std::string response;
  bool no_smear = false;
};

int cmd_unfold(const Globals& g, const UnfoldArgs& a) {
  const RunConfig cfg = resolve(g);
  const std::uint64_t seed = cfg.require_seed();

  Stage stage("unfold", cfg);
  std::istringstream cin_(stage.input(a.counts));
  const BinnedCounts raw = read_counts(cin_, a.counts);
  const auto templates = background_templates(cfg, seed);
  const Analysis an = analyze(raw, cfg, templates);

  std::pair<ResponseMatrix, ResponseMatrix> response;
  if (a.response.empty()) {
    response = build_response(generate_mc(cfg, cfg.detector, seed), cfg.binning);
    stage.output("response.csv", render([&](std::ostream& os) {
                   write_responses(os, response.first, response.second);
                 }));
  } else {
    std::istringstream rin(stage.input(a.response));
    response = read_responses(rin, a.response);
    if (!(response.first.binning == cfg.binning))
      throw ValidationError(a.response + ": response binning differs from the configured binning");
  }

  std::optional<BiasCorrection> bias;
  if (cfg.replicas > 0) {
    const Ensemble e =
        run_ensemble(cfg, {GenModel::QM, GenModel::SD, GenModel::PS_MAX}, cfg.replicas, seed);
    bias = ensemble_bias(e, 1);
    std::string failures;
    for (const auto& run : e.runs)
      failures += std::string(failures.empty() ? "" : ",") + std::string(to_string(run.model)) +
                  "=" + std::to_string(run.failures);
    stage.note("ensemble_failures", failures);
    stage.output("bias.csv", render([&](std::ostream& os) {
                   os << "bin,correction,systematic\n";
                   for (std::size_t i = 0; i < bias->correction.size(); ++i)
                     os << i + 1 << ',' << format_double(bias->correction[i]) << ','
                        << format_double(bias->systematic[i]) << '\n';
                 }));
  }
  stage.note("replicas", std::to_string(cfg.replicas));

  std::vector<double> smear;
  if (!a.no_smear) smear = smearing_systematic(an, cfg, seed);

  const Unfolding u =
      unfold_analysis(an, cfg, templates, response, bias ? &*bias : nullptr, std::move(smear));
  stage.output("counts_unfolded.csv",
               render([&](std::ostream& os) { write_counts(os, u.result.truth); }));
  stage.output("spectrum_unfolded.csv",
               render([&](std::ostream& os) { write_spectrum(os, u.spectrum); }));
  stage.output("covariance_unfolded.csv",
               render([&](std::ostream& os) { write_matrix(os, *u.spectrum.stat_cov); }));
  stage.finish();
  return 0;
}

// fit

struct FitArgs {
  std::string spectrum;
  std::string models;
  std::string covariance;
  std::string averaging;
};

int cmd_fit(const Globals& g, const FitArgs& a) {
  RunConfig cfg = resolve(g);
  if (!a.models.empty()) {
    cfg.fit_models.clear();
    for (const auto& m : split(a.models, ',')) cfg.fit_models.push_back(fit_model_from_string(trim(m)));
  }
  if (!a.averaging.empty()) cfg.averaging = bin_averaging_from_string(a.averaging);

  Stage stage("fit", cfg);
  std::istringstream sin(stage.input(a.spectrum));
  AsymmetrySpectrum s = read_spectrum(sin, a.spectrum);
  if (!a.covariance.empty()) {
    std::istringstream vin(stage.input(a.covariance));
    Eigen::MatrixXd cov = read_matrix(vin, a.covariance);
    if (cov.rows() != static_cast<Eigen::Index>(s.size()) || cov.cols() != cov.rows())
      throw ValidationError(a.covariance + ": covariance size does not match the spectrum");
    s.stat_cov = std::move(cov);
    cfg.full_covariance = true;
  }
  const FitSummary f = fit_all(s, cfg);
  const std::string report = format_fit_report(f, fs::path(a.spectrum).filename().string());
  std::cout << report;
  stage.output("fit_report.txt", report);
  stage.finish();
  return 0;
}

// reproduce

int cmd_reproduce(const Globals& g, const std::string& fixture) {
  const RunConfig cfg = resolve(g);
  Stage stage("reproduce", cfg);
  std::istringstream in(stage.input(fixture));
  const AsymmetrySpectrum s = read_spectrum(in, fixture);

  const FixtureFits f = fit_fixture(s, cfg);
  auto rows = fit_checks(f);
  for (auto& r : significance_checks(f)) rows.push_back(r);
  for (auto& r : zeta_checks(f)) rows.push_back(r);

  RunConfig mid = cfg;
  mid.averaging = BinAveraging::Midpoint;
  const FixtureFits fm = fit_fixture(s, mid);

  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.pass();
  const std::string report = render([&](std::ostream& os) {
    os << "# fixture " << fs::path(fixture).filename().string() << ", averaging "
       << to_string(cfg.averaging) << '\n';
    os << format_checks(rows);
    os << "\n# midpoint evaluation (for comparison)\n";
    os << "QM dm " << format_fixed(fm.qm.theta_hat, 4) << " chi2 " << format_fixed(fm.qm.chi2, 2)
       << "; SD dm " << format_fixed(fm.sd.theta_hat, 4) << " chi2 "
       << format_fixed(fm.sd.chi2, 2) << "; PS dm " << format_fixed(fm.ps.theta_hat, 4)
       << " chi2 " << format_fixed(fm.ps.chi2, 2) << '\n';
    os << "\n" << rows.size() - failed << "/" << rows.size() << " rows within tolerance\n";
  });
  std::cout << report;
  stage.note("rows_failed", std::to_string(failed));
  stage.output("reproduce.txt", report);
  stage.output("fit_report.txt", format_fit_report(fit_all(s, cfg), "table1_asymmetry"));
  stage.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flavent: flavour-entanglement asymmetry toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed for stochastic stages");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--replicas", g.replicas, "pseudo-experiments per model for bias correction");

  CurveArgs curve;
  auto* curves = app.add_subcommand("curves", "model asymmetry curves on a dt grid");
  curves->add_option("--min", curve.lo, "first dt [ps]");
  curves->add_option("--max", curve.hi, "last dt [ps]");
  curves->add_option("--step", curve.step, "grid step [ps]");
  curves->add_option("--dm", curve.dm, "override dm [1/ps]");
  curves->add_option("--tau", curve.tau, "override tau [ps]");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "simulate an event sample");
  generate->add_option("--model", gen.model, "QM, SD, PS_MAX, PS_MIN or DECOHERED");
  generate->add_option("--events", gen.events, "signal events");

  std::string events_path;
  auto* analyze_cmd = app.add_subcommand("analyze", "bin, subtract backgrounds, correct mistags");
  analyze_cmd->add_option("events", events_path, "event file")->required();

  UnfoldArgs unf;
  auto* unfold = app.add_subcommand("unfold", "deconvolve reconstructed counts");
  unfold->add_option("counts", unf.counts, "raw counts file from analyze")->required();
  unfold->add_option("--response", unf.response, "response file (simulated when absent)");
  unfold->add_flag("--no-smear", unf.no_smear, "skip the smearing systematic");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit models to an asymmetry spectrum");
  fit_cmd->add_option("spectrum", fit.spectrum, "spectrum file")->required();
  fit_cmd->add_option("--models", fit.models, "comma-separated list of QM,SD,PS,DECOHERED");
  fit_cmd->add_option("--covariance", fit.covariance, "statistical covariance matrix file");
  fit_cmd->add_option("--averaging", fit.averaging, "rate or midpoint");

  std::string fixture = FLAVENT_FIXTURE;
  auto* reproduce = app.add_subcommand("reproduce", "fit the shipped fixture, compare with reference values");
  reproduce->add_option("--fixture", fixture, "fixture spectrum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*curves) return cmd_curves(g, curve);
    if (*generate) return cmd_generate(g, gen);
    if (*analyze_cmd) return cmd_analyze(g, events_path);
    if (*unfold) return cmd_unfold(g, unf);
    if (*fit_cmd) return cmd_fit(g, fit);
    if (*reproduce) return cmd_reproduce(g, fixture);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

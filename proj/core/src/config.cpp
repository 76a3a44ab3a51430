#include "flavent/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "flavent/error.hpp"
#include "flavent/text.hpp"

namespace flavent {

IniFile IniFile::parse(const std::string& text, const std::string& source) {
  IniFile ini;
  ini.source_ = source;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  const auto fail = [&](const std::string& msg) {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto c = s.find_first_of("#;"); c != std::string_view::npos) s = s.substr(0, c);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("unterminated section header");
      section = std::string(trim(s.substr(1, s.size() - 2)));
      if (section.empty()) fail("empty section name");
      ini.data_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside any [section]");
    const std::string key(trim(s.substr(0, eq)));
    if (key.empty()) fail("empty key");
    auto& entries = ini.data_[section];
    if (entries.contains(key))
      fail("duplicate key '" + key + "' (first set on line " + std::to_string(entries[key].line) + ")");
    entries[key] = {std::string(trim(s.substr(eq + 1))), line};
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const IniFile::Entry* IniFile::find(const std::string& section, const std::string& key) const {
  const auto s = data_.find(section);
  if (s == data_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

std::vector<std::string> IniFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  if (const auto s = data_.find(section); s != data_.end())
    for (const auto& [k, v] : s->second) out.push_back(k);
  return out;
}

bool IniFile::has_section(const std::string& section) const { return data_.contains(section); }

std::vector<std::string> IniFile::sections() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : data_) out.push_back(k);
  return out;
}

std::string IniFile::where(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  return source_ + ":" + std::to_string(e ? e->line : 0) + ": [" + section + "] " + key;
}

namespace {

class Reader {
 public:
  explicit Reader(const IniFile& ini) : ini_(ini) {}

  void number(const std::string& sec, const std::string& key, double& out) {
    if (const auto* e = take(sec, key)) {
      const auto v = parse_double(e->value);
      if (!v) fail(sec, key, "expected a number, got '" + e->value + "'");
      out = *v;
    }
  }

  template <class T>
  void count(const std::string& sec, const std::string& key, T& out) {
    if (const auto* e = take(sec, key)) {
      const auto v = parse_uint(e->value);
      if (!v) fail(sec, key, "expected a non-negative integer, got '" + e->value + "'");
      out = static_cast<T>(*v);
    }
  }

  void integer(const std::string& sec, const std::string& key, int& out) {
    if (const auto* e = take(sec, key)) {
      const auto v = parse_double(e->value);
      if (!v || *v != static_cast<int>(*v)) fail(sec, key, "expected an integer, got '" + e->value + "'");
      out = static_cast<int>(*v);
    }
  }

  void boolean(const std::string& sec, const std::string& key, bool& out) {
    if (const auto* e = take(sec, key)) {
      if (e->value == "true" || e->value == "1" || e->value == "yes")
        out = true;
      else if (e->value == "false" || e->value == "0" || e->value == "no")
        out = false;
      else
        fail(sec, key, "expected true or false, got '" + e->value + "'");
    }
  }

  std::optional<std::string> text(const std::string& sec, const std::string& key) {
    if (const auto* e = take(sec, key)) return e->value;
    return std::nullopt;
  }

  std::optional<std::vector<double>> list(const std::string& sec, const std::string& key) {
    const auto* e = take(sec, key);
    if (!e) return std::nullopt;
    std::vector<double> out;
    if (trim(e->value) == "none") return out;
    for (auto part : split(e->value, ',')) {
      const auto v = parse_double(part);
      if (!v) fail(sec, key, "bad list element '" + std::string(trim(part)) + "'");
      out.push_back(*v);
    }
    return out;
  }

  // Converts enum-like values, re-raising parse errors with the location.
  template <class F>
  auto convert(const std::string& sec, const std::string& key, const std::string& value, F&& f) {
    try {
      return f(value);
    } catch (const ValidationError& e) {
      fail(sec, key, e.what());
    }
    throw;  // unreachable
  }

  [[noreturn]] void fail(const std::string& sec, const std::string& key, const std::string& msg) {
    throw ValidationError(ini_.where(sec, key) + ": " + msg);
  }

  void reject_unused() const {
    for (const auto& sec : ini_.sections())
      for (const auto& key : ini_.keys(sec))
        if (!used_.contains(sec + "\n" + key))
          throw ValidationError(ini_.where(sec, key) + ": unknown key");
  }

 private:
  const IniFile::Entry* take(const std::string& sec, const std::string& key) {
    const auto* e = ini_.find(sec, key);
    if (e) used_.insert(sec + "\n" + key);
    return e;
  }

  const IniFile& ini_;
  std::set<std::string> used_;
};

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "exponential") return ShapeKind::Exponential;
  if (s == "flat") return ShapeKind::Flat;
  throw ValidationError("unknown background shape '" + s + "' (exponential|flat)");
}

std::string_view to_string(ShapeKind k) { return k == ShapeKind::Flat ? "flat" : "exponential"; }

}  // namespace

std::vector<double> RunConfig::nominal_event_selection() {
  return {0.005, 0.006, 0.013, 0.008, 0.009, 0.021, 0.020, 0.034, 0.041, 0.067, 0.145};
}

void RunConfig::validate() const {
  params.validate();
  detector.validate();
  if (!(mistag_error >= 0.0)) throw ValidationError("mistag_error must be >= 0");
  if (!(smear_delta >= 0.0)) throw ValidationError("smear_delta must be >= 0");
  backgrounds.validate();
  unfold.validate(binning.size());
  constraint.validate();
  if (!event_selection.empty() && event_selection.size() != binning.size())
    throw ValidationError("event_selection needs one value per bin");
  for (double v : event_selection)
    if (!(v >= 0.0)) throw ValidationError("event_selection values must be >= 0");
  if (!(mc_factor > 0.0)) throw ValidationError("mc_factor must be > 0");
  if (streams == 0) throw ValidationError("streams must be >= 1");
  if (threads == 0) throw ValidationError("threads must be >= 1");
  if (template_events == 0) throw ValidationError("template_events must be >= 1");
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ValidationError("a master seed is required ([run] seed or --seed)");
  return *seed;
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.params = params;
  o.averaging = averaging;
  o.full_covariance = full_covariance;
  return o;
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "dm=" << format_double(params.dm) << "\ntau=" << format_double(params.tau)
     << "\nzeta=" << format_double(params.zeta) << "\ngenerator=" << to_string(generator)
     << "\nresolution_sigma=" << format_double(detector.resolution_sigma)
     << "\nextra_smear_sigma=" << format_double(detector.extra_smear_sigma)
     << "\nmistag_fraction=" << format_double(detector.mistag_fraction)
     << "\nbackgrounds=" << (backgrounds_enabled ? "on" : "off")
     << "\nfixed_counts=" << backgrounds.fixed_counts << "\n";
  for (const auto& c : backgrounds.components)
    os << to_string(c.category) << '=' << format_double(c.n_of) << ',' << format_double(c.n_sf)
       << ',' << format_double(c.err_of) << ',' << format_double(c.err_sf) << ','
       << to_string(c.shape.kind) << ',' << format_double(c.shape.tau) << ','
       << format_double(c.shape.dm) << ',' << format_double(c.shape.range_hi) << '\n';
  os << "template_events=" << template_events << '\n';
  os << "binning=" << binning.to_string() << '\n';
  os << "event_selection=";
  for (std::size_t i = 0; i < event_selection.size(); ++i)
    os << (i ? "," : "") << format_double(event_selection[i]);
  os << "\nmistag_error=" << format_double(mistag_error)
     << "\nsmear_delta=" << format_double(smear_delta)
     << "\nsmear_variation=" << (smear_variation == SmearVariation::Quadrature ? "quadrature" : "linear")
     << "\nranks=" << unfold.rank_of << ',' << unfold.rank_sf
     << "\nmixing=" << format_double(unfold.mix_s) << ',' << format_double(unfold.mix_o)
     << "\nregularization=" << to_string(unfold.regularization)
     << "\nmc_factor=" << format_double(mc_factor)
     << "\nconstraint=" << format_double(constraint.mean) << ',' << format_double(constraint.sigma)
     << "\naveraging=" << to_string(averaging) << "\nfull_covariance=" << full_covariance
     << "\nmodels=";
  for (std::size_t i = 0; i < fit_models.size(); ++i) os << (i ? "," : "") << to_string(fit_models[i]);
  os << "\nseed=" << (seed ? std::to_string(*seed) : "none") << "\nsignal_events=" << signal_events
     << "\nstreams=" << streams << "\nreplicas=" << replicas << '\n';
  return os.str();
}

RunConfig parse_config(const IniFile& ini) {
  RunConfig cfg;
  Reader r(ini);

  r.number("model", "dm", cfg.params.dm);
  r.number("model", "tau", cfg.params.tau);
  r.number("model", "zeta", cfg.params.zeta);
  if (auto g = r.text("model", "generator"))
    cfg.generator = r.convert("model", "generator", *g, [](const std::string& s) {
      return gen_model_from_string(s);
    });

  r.number("detector", "resolution_sigma", cfg.detector.resolution_sigma);
  r.number("detector", "extra_smear_sigma", cfg.detector.extra_smear_sigma);
  r.number("detector", "mistag_fraction", cfg.detector.mistag_fraction);
  r.number("detector", "mistag_error", cfg.mistag_error);
  r.number("detector", "smear_delta", cfg.smear_delta);
  if (auto v = r.text("detector", "smear_variation")) {
    if (*v == "quadrature")
      cfg.smear_variation = SmearVariation::Quadrature;
    else if (*v == "linear")
      cfg.smear_variation = SmearVariation::Linear;
    else
      r.fail("detector", "smear_variation", "expected quadrature or linear");
  }

  cfg.backgrounds = BackgroundConfig::nominal(cfg.params.tau);
  r.boolean("backgrounds", "enabled", cfg.backgrounds_enabled);
  r.boolean("backgrounds", "fixed_counts", cfg.backgrounds.fixed_counts);
  r.count("backgrounds", "template_events", cfg.template_events);
  for (auto& c : cfg.backgrounds.components) {
    const std::string p = std::string(to_string(c.category)) + ".";
    r.number("backgrounds", p + "n_of", c.n_of);
    r.number("backgrounds", p + "n_sf", c.n_sf);
    r.number("backgrounds", p + "err_of", c.err_of);
    r.number("backgrounds", p + "err_sf", c.err_sf);
    r.number("backgrounds", p + "tau", c.shape.tau);
    r.number("backgrounds", p + "dm", c.shape.dm);
    r.number("backgrounds", p + "range_hi", c.shape.range_hi);
    if (auto k = r.text("backgrounds", p + "shape"))
      c.shape.kind = r.convert("backgrounds", p + "shape", *k, shape_kind_from_string);
  }

  if (auto edges = r.list("analysis", "binning")) {
    try {
      cfg.binning = Binning(*edges);
    } catch (const ValidationError& e) {
      r.fail("analysis", "binning", e.what());
    }
  }
  cfg.event_selection = cfg.binning == Binning() ? RunConfig::nominal_event_selection()
                                                 : std::vector<double>{};
  if (auto v = r.list("analysis", "event_selection")) cfg.event_selection = *v;

  r.integer("unfold", "rank_of", cfg.unfold.rank_of);
  r.integer("unfold", "rank_sf", cfg.unfold.rank_sf);
  r.number("unfold", "mix_s", cfg.unfold.mix_s);
  r.number("unfold", "mix_o", cfg.unfold.mix_o);
  r.number("unfold", "mc_factor", cfg.mc_factor);
  if (auto v = r.text("unfold", "regularization"))
    cfg.unfold.regularization = r.convert("unfold", "regularization", *v, [](const std::string& s) {
      return regularization_from_string(s);
    });

  r.number("fit", "constraint_mean", cfg.constraint.mean);
  r.number("fit", "constraint_sigma", cfg.constraint.sigma);
  if (auto v = r.text("fit", "averaging"))
    cfg.averaging = r.convert("fit", "averaging", *v, [](const std::string& s) {
      return bin_averaging_from_string(s);
    });
  r.boolean("fit", "full_covariance", cfg.full_covariance);
  if (auto v = r.text("fit", "models")) {
    cfg.fit_models.clear();
    for (auto part : split(*v, ','))
      cfg.fit_models.push_back(r.convert("fit", "models", std::string(trim(part)),
                                         [](const std::string& s) { return fit_model_from_string(s); }));
  }

  if (ini.find("run", "seed")) {
    std::uint64_t seed = 0;
    r.count("run", "seed", seed);
    cfg.seed = seed;
  }
  r.count("run", "signal_events", cfg.signal_events);
  r.count("run", "streams", cfg.streams);
  r.count("run", "threads", cfg.threads);
  r.count("run", "replicas", cfg.replicas);
  if (auto v = r.text("run", "output")) cfg.output = *v;

  r.reject_unused();
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(ini.source() + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(IniFile::load(path)); }

}  // namespace flavent

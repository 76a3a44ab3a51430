#pragma once

// Run configuration: an INI-style key = value file with [sections].
// Every constant the pipeline uses has a default here.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flavent/binning.hpp"
#include "flavent/fitkit.hpp"
#include "flavent/models.hpp"
#include "flavent/toygen.hpp"
#include "flavent/unfold.hpp"

namespace flavent {

/// Parsed INI text. Keys keep the line they came from for diagnostics.
class IniFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  /// Throws ValidationError("<source>:<line>: ...") on malformed lines or
  /// duplicate keys.
  static IniFile parse(const std::string& text, const std::string& source = "<config>");
  static IniFile load(const std::filesystem::path& path);

  const Entry* find(const std::string& section, const std::string& key) const;
  std::vector<std::string> keys(const std::string& section) const;
  bool has_section(const std::string& section) const;
  std::vector<std::string> sections() const;
  const std::string& source() const { return source_; }

  /// "<source>:<line>: [section] key: message"
  std::string where(const std::string& section, const std::string& key) const;

 private:
  std::string source_;
  std::map<std::string, std::map<std::string, Entry>> data_;
};

struct RunConfig {
  // [model]
  ModelParams params;
  GenModel generator = GenModel::QM;
  // [detector]
  DetectorConfig detector;
  double mistag_error = 0.005;
  double smear_delta = 35.0;  // um
  SmearVariation smear_variation = SmearVariation::Quadrature;
  // [backgrounds]
  BackgroundConfig backgrounds = BackgroundConfig::nominal();
  bool backgrounds_enabled = true;
  std::size_t template_events = 200000;
  // [analysis]
  Binning binning;
  std::vector<double> event_selection = nominal_event_selection();  // per-bin, empty for none
  // [unfold]
  UnfoldConfig unfold;
  double mc_factor = 5.0;
  // [fit]
  Constraint constraint;
  BinAveraging averaging = BinAveraging::RateWeighted;
  bool full_covariance = false;
  std::vector<FitModel> fit_models{FitModel::QM, FitModel::SD, FitModel::PS, FitModel::DECOHERED};
  // [run]
  std::optional<std::uint64_t> seed;
  std::size_t signal_events = 7815;
  unsigned streams = 1;
  unsigned threads = 1;
  std::size_t replicas = 300;
  std::filesystem::path output = "out";

  /// Event-selection systematic of the published spectrum, bins 1-11.
  static std::vector<double> nominal_event_selection();

  void validate() const;
  /// Throws ValidationError for stochastic commands run without a seed.
  std::uint64_t require_seed() const;
  FitOptions fit_options() const;
  /// Detector, backgrounds and binning as a canonical text, for hashing.
  std::string canonical() const;
};

/// Defaults overlaid with the file's values. Unknown sections or keys and
/// unparsable values are ValidationErrors naming the line.
RunConfig parse_config(const IniFile& ini);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace flavent

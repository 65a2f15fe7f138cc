#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace liftload {

struct PipelineConfig {
  double sample_rate_hz = 20.0;
  double cutoff_hz = 0.3;
  int filter_order = 2;
  double baseline_window_s = 5.0;
  double lift_window_s = 10.0;
  std::size_t aggregation_count = 10;
  double trim_low = 0.1;
  double trim_high = 0.9;
  std::vector<double> unseen_loads_kg{3.0, 6.0, 9.0};
  std::uint64_t split_seed = 42;

  // Throws Error(InvalidConfig / InvalidCutoff) on any broken invariant.
  void validate() const;

  std::size_t baseline_window_frames() const;
  std::size_t lift_window_frames() const;
};

// Flat key=value settings. Lines starting with '#' and blank lines are
// ignored; an optional "[section]" header prefixes following keys with
// "section.".
using Settings = std::map<std::string, std::string>;

Settings parse_settings(const std::string& text);
Settings load_settings(const std::filesystem::path& path);

// Applies every recognised pipeline key; unrelated keys are left for other
// consumers (model hyperparameters). Throws InvalidConfig on bad values.
PipelineConfig pipeline_config_from(const Settings& settings,
                                    PipelineConfig base = {});

// Names of the keys understood by pipeline_config_from.
const std::vector<std::string>& pipeline_config_keys();

double setting_double(const Settings& s, const std::string& key, double fallback);
long long setting_int(const Settings& s, const std::string& key, long long fallback);

}  // namespace liftload

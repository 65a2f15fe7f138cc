#include "liftload/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "liftload/core.hpp"

namespace liftload {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects an integer, got '" + value + "'");
  }
}

std::vector<double> parse_list(const std::string& key, std::string value) {
  if (!value.empty() && value.front() == '[' && value.back() == ']') {
    value = value.substr(1, value.size() - 2);
  }
  std::vector<double> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto t = trim(item);
    if (!t.empty()) out.push_back(parse_double(key, t));
  }
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw Error(ErrorCode::InvalidConfig, "sample_rate_hz must be positive");
  }
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0)) {
    throw Error(ErrorCode::InvalidCutoff,
                "cutoff_hz must lie in (0, sample_rate_hz/2), got " + std::to_string(cutoff_hz));
  }
  if (filter_order != 2) {
    throw Error(ErrorCode::InvalidConfig, "only filter_order = 2 is supported");
  }
  if (!(baseline_window_s > 0.0) || !(lift_window_s > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "window lengths must be positive");
  }
  if (aggregation_count == 0) {
    throw Error(ErrorCode::InvalidConfig, "aggregation_count must be at least 1");
  }
  if (!(trim_low >= 0.0) || !(trim_low < trim_high) || !(trim_high <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "trim quantiles need 0 <= low < high <= 1");
  }
  for (double kg : unseen_loads_kg) {
    if (!is_ladder_load(kg)) {
      throw Error(ErrorCode::InvalidConfig, "unseen load " + std::to_string(kg) + " not on ladder");
    }
  }
}

std::size_t PipelineConfig::baseline_window_frames() const {
  return static_cast<std::size_t>(std::llround(baseline_window_s * sample_rate_hz));
}

std::size_t PipelineConfig::lift_window_frames() const {
  return static_cast<std::size_t>(std::llround(lift_window_s * sample_rate_hz));
}

Settings parse_settings(const std::string& text) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "expected key = value", line_no);
    }
    auto key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "empty key", line_no);
    if (!section.empty()) key = section + "." + key;
    out[key] = unquote(trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

Settings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_settings(buffer.str());
}

const std::vector<std::string>& pipeline_config_keys() {
  static const std::vector<std::string> keys{
      "sample_rate_hz", "cutoff_hz", "filter_order",    "baseline_window_s",
      "lift_window_s",  "aggregation_count", "trim_low", "trim_high",
      "unseen_loads_kg", "split_seed"};
  return keys;
}

PipelineConfig pipeline_config_from(const Settings& settings, PipelineConfig cfg) {
  for (const auto& [key, value] : settings) {
    if (key == "sample_rate_hz") cfg.sample_rate_hz = parse_double(key, value);
    else if (key == "cutoff_hz") cfg.cutoff_hz = parse_double(key, value);
    else if (key == "filter_order") cfg.filter_order = static_cast<int>(parse_int(key, value));
    else if (key == "baseline_window_s") cfg.baseline_window_s = parse_double(key, value);
    else if (key == "lift_window_s") cfg.lift_window_s = parse_double(key, value);
    else if (key == "aggregation_count") {
      const auto n = parse_int(key, value);
      if (n < 1) throw Error(ErrorCode::InvalidConfig, "aggregation_count must be >= 1");
      cfg.aggregation_count = static_cast<std::size_t>(n);
    } else if (key == "trim_low") cfg.trim_low = parse_double(key, value);
    else if (key == "trim_high") cfg.trim_high = parse_double(key, value);
    else if (key == "unseen_loads_kg") cfg.unseen_loads_kg = parse_list(key, value);
    else if (key == "split_seed") {
      const auto n = parse_int(key, value);
      if (n < 0) throw Error(ErrorCode::InvalidConfig, "split_seed must be non-negative");
      cfg.split_seed = static_cast<std::uint64_t>(n);
    }
  }
  cfg.validate();
  return cfg;
}

double setting_double(const Settings& s, const std::string& key, double fallback) {
  const auto it = s.find(key);
  return it == s.end() ? fallback : parse_double(key, it->second);
}

long long setting_int(const Settings& s, const std::string& key, long long fallback) {
  const auto it = s.find(key);
  return it == s.end() ? fallback : parse_int(key, it->second);
}

}  // namespace liftload

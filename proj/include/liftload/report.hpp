#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "liftload/eval.hpp"

namespace liftload::eval {

std::string report_to_json(const EvalReport& report);
// Throws CorruptFile on malformed input.
EvalReport report_from_json(std::string_view text);

void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

// One row per (subject, model, load): `subject,model,load,mae`.
std::string report_to_csv(const EvalReport& report);

// Box plot of aggregated-window errors per model for each subject and each
// unseen load. Returns the written file paths.
std::vector<std::filesystem::path> write_box_plots(const EvalReport& report,
                                                   const std::filesystem::path& dir);

// Quartiles and Tukey whiskers of one error list.
struct BoxStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;
  std::vector<double> outliers;
};
BoxStats box_stats(std::vector<double> values);

}  // namespace liftload::eval

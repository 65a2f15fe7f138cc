#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "liftload/core.hpp"

namespace liftload {

// Labelled dataset file: header `subject,session,t_ms,f00..f35,label_kg`,
// one sample per row, empty label for unlabelled rows.
void write_dataset(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> read_dataset(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace liftload

#include "liftload/dataset.hpp"

#include <charconv>
#include <fstream>

#include "text_util.hpp"

namespace liftload {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::Io, "cannot format number");
  return std::string(buf, ptr);
}

void write_dataset(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write dataset " + path.string());
  out << "subject,session,t_ms";
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    out << ",f" << (c < 10 ? "0" : "") << c;
  }
  out << ",label_kg\n";
  for (const auto& s : samples) {
    if (s.subject_id.find_first_of(",\n\r") != std::string::npos) {
      throw Error(ErrorCode::Io, "subject id '" + s.subject_id + "' contains a separator");
    }
    out << s.subject_id << ',' << s.session_index << ',' << s.frame_timestamp_ms;
    for (double v : s.features) out << ',' << format_double(v);
    out << ',';
    if (s.label_kg) out << format_double(*s.label_kg);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<LabeledSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty dataset file", 1);
  const auto header = detail::split_csv(line);
  constexpr std::size_t kColumns = 3 + kChannelCount + 1;
  if (header.size() != kColumns || header[0] != "subject" || header[kColumns - 1] != "label_kg") {
    throw Error(ErrorCode::ParseError, "unexpected dataset header", 1);
  }

  std::vector<LabeledSample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_view(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != kColumns) {
      throw Error(ErrorCode::ParseError,
                  "expected " + std::to_string(kColumns) + " columns, got " +
                      std::to_string(cells.size()),
                  line_no);
    }
    LabeledSample s;
    s.subject_id = std::string(cells[0]);
    const auto session = detail::to_int(cells[1]);
    const auto t = detail::to_int(cells[2]);
    if (!session || !t) throw Error(ErrorCode::ParseError, "bad session or timestamp", line_no);
    s.session_index = static_cast<int>(*session);
    s.frame_timestamp_ms = *t;
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      const auto v = detail::to_double(cells[3 + c]);
      if (!v) throw Error(ErrorCode::ParseError, "bad feature value", line_no);
      s.features[c] = *v;
    }
    if (!cells.back().empty()) {
      const auto label = detail::to_double(cells.back());
      if (!label) throw Error(ErrorCode::ParseError, "bad label", line_no);
      s.label_kg = *label;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace liftload

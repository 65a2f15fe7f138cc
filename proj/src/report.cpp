#include "liftload/report.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "liftload/aggregate.hpp"
#include "liftload/dataset.hpp"

namespace liftload::eval {

using nlohmann::json;

namespace {

json lists_to_json(const std::map<std::string, ErrorLists>& by) {
  json j = json::object();
  for (const auto& [group, lists] : by) {
    for (const auto& [model, errors] : lists) j[group][model] = errors;
  }
  return j;
}

std::map<std::string, ErrorLists> lists_from_json(const json& j) {
  std::map<std::string, ErrorLists> out;
  for (const auto& [group, lists] : j.items()) {
    for (const auto& [model, errors] : lists.items()) {
      out[group][model] = errors.get<std::vector<double>>();
    }
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

std::string box_plot_svg(const std::string& title, const ErrorLists& lists,
                         const std::vector<std::string>& models) {
  constexpr double kWidth = 120.0 * 3 + 80.0, kHeight = 320.0;
  constexpr double kTop = 40.0, kBottom = 280.0, kLeft = 60.0;
  double y_max = 0.0;
  for (const auto& [m, errors] : lists) {
    for (double e : errors) y_max = std::max(y_max, e);
  }
  y_max = y_max > 0.0 ? y_max * 1.1 : 1.0;
  auto y_of = [&](double v) { return kBottom - (v / y_max) * (kBottom - kTop); };
  const double slot = (kWidth - kLeft - 20.0) / static_cast<double>(std::max<std::size_t>(1, models.size()));

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\">" << svg_escape(title)
      << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kBottom << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y_max * t / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y_of(v) + 4) << "\" text-anchor=\"end\">"
        << fmt(v) << "</text>\n";
  }
  svg << "<text x=\"15\" y=\"" << (kTop + kBottom) / 2 << "\" transform=\"rotate(-90 15 "
      << (kTop + kBottom) / 2 << ")\" text-anchor=\"middle\">MAE (kg)</text>\n";

  for (std::size_t m = 0; m < models.size(); ++m) {
    const double cx = kLeft + slot * (static_cast<double>(m) + 0.5);
    svg << "<text x=\"" << fmt(cx) << "\" y=\"" << kBottom + 20 << "\" text-anchor=\"middle\">"
        << svg_escape(models[m]) << "</text>\n";
    const auto it = lists.find(models[m]);
    if (it == lists.end() || it->second.empty()) continue;
    const auto b = box_stats(it->second);
    const double half = slot * 0.25;
    svg << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(y_of(b.whisker_low)) << "\" x2=\""
        << fmt(cx) << "\" y2=\"" << fmt(y_of(b.whisker_high)) << "\" stroke=\"black\"/>\n";
    svg << "<rect x=\"" << fmt(cx - half) << "\" y=\"" << fmt(y_of(b.q3)) << "\" width=\""
        << fmt(2 * half) << "\" height=\"" << fmt(y_of(b.q1) - y_of(b.q3))
        << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt(cx - half) << "\" y1=\"" << fmt(y_of(b.median)) << "\" x2=\""
        << fmt(cx + half) << "\" y2=\"" << fmt(y_of(b.median))
        << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double o : b.outliers) {
      svg << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(y_of(o))
          << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j;
  j["models"] = r.models;
  j["split"] = {{"train_samples", r.train_samples},
                {"val_samples", r.val_samples},
                {"test_samples", r.test_samples},
                {"train_loads_kg", r.train_loads_kg},
                {"test_loads_kg", r.test_loads_kg},
                {"unseen_loads_kg", r.unseen_loads_kg}};
  json summaries = json::array();
  for (const auto& s : r.summaries) {
    json e = {{"model", s.model},         {"mean_mae", s.mean_mae},
              {"raw_mae", s.raw_mae},     {"unseen_mean_mae", s.unseen_mean_mae},
              {"train_loss", s.train_loss}, {"epochs", s.epochs},
              {"converged", s.converged}};
    e["val_loss"] = s.val_loss ? json(*s.val_loss) : json(nullptr);
    summaries.push_back(e);
  }
  j["summaries"] = summaries;
  j["subject_errors"] = lists_to_json(r.subject_errors);
  j["unseen_load_errors"] = lists_to_json(r.unseen_errors);
  json per_load = json::array();
  for (const auto& p : r.per_load) {
    per_load.push_back({{"subject", p.subject},
                        {"model", p.model},
                        {"load_kg", p.load_kg},
                        {"mae", p.mae},
                        {"raw_mae", p.raw_mae},
                        {"windows", p.windows}});
  }
  j["per_load"] = per_load;
  json tests = json::array();
  for (const auto& t : r.tests) {
    tests.push_back({{"grouping", t.grouping},
                     {"group", t.group},
                     {"model_a", t.model_a},
                     {"model_b", t.model_b},
                     {"u", t.u},
                     {"p", t.p},
                     {"exact", t.exact},
                     {"stars", t.stars}});
  }
  j["tests"] = tests;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.models = j.at("models").get<std::vector<std::string>>();
    const auto& split = j.at("split");
    r.train_samples = split.at("train_samples").get<std::size_t>();
    r.val_samples = split.at("val_samples").get<std::size_t>();
    r.test_samples = split.at("test_samples").get<std::size_t>();
    r.train_loads_kg = split.at("train_loads_kg").get<std::vector<double>>();
    r.test_loads_kg = split.at("test_loads_kg").get<std::vector<double>>();
    r.unseen_loads_kg = split.at("unseen_loads_kg").get<std::vector<double>>();
    for (const auto& e : j.at("summaries")) {
      ModelSummary s;
      s.model = e.at("model").get<std::string>();
      s.mean_mae = e.at("mean_mae").get<double>();
      s.raw_mae = e.at("raw_mae").get<double>();
      s.unseen_mean_mae = e.at("unseen_mean_mae").get<double>();
      s.train_loss = e.at("train_loss").get<double>();
      if (!e.at("val_loss").is_null()) s.val_loss = e.at("val_loss").get<double>();
      s.epochs = e.at("epochs").get<std::size_t>();
      s.converged = e.at("converged").get<bool>();
      r.summaries.push_back(s);
    }
    r.subject_errors = lists_from_json(j.at("subject_errors"));
    r.unseen_errors = lists_from_json(j.at("unseen_load_errors"));
    for (const auto& e : j.at("per_load")) {
      r.per_load.push_back({e.at("subject").get<std::string>(), e.at("model").get<std::string>(),
                            e.at("load_kg").get<double>(), e.at("mae").get<double>(),
                            e.at("raw_mae").get<double>(), e.at("windows").get<std::size_t>()});
    }
    for (const auto& e : j.at("tests")) {
      r.tests.push_back({e.at("grouping").get<std::string>(), e.at("group").get<std::string>(),
                         e.at("model_a").get<std::string>(), e.at("model_b").get<std::string>(),
                         e.at("u").get<double>(), e.at("p").get<double>(),
                         e.at("exact").get<bool>(), e.at("stars").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("evaluation report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << report_to_json(report);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

EvalReport load_report(const std::filesystem::path& path) {
  return report_from_json(read_text(path));
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "subject,model,load,mae\n";
  for (const auto& p : report.per_load) {
    out << p.subject << ',' << p.model << ',' << format_double(p.load_kg) << ','
        << format_double(p.mae) << '\n';
  }
  return out.str();
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats b;
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  b.q1 = interpolated_quantile(values, 0.25);
  b.median = interpolated_quantile(values, 0.5);
  b.q3 = interpolated_quantile(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo || v > hi) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  return b;
}

std::vector<std::filesystem::path> write_box_plots(const EvalReport& report,
                                                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& stem, const std::string& title, const ErrorLists& lists) {
    const auto path = dir / (safe_name(stem) + ".svg");
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << box_plot_svg(title, lists, report.models);
    written.push_back(path);
  };
  for (const auto& [subject, lists] : report.subject_errors) {
    emit("subject_" + subject, "Subject " + subject, lists);
  }
  for (const auto& [load, lists] : report.unseen_errors) {
    emit("unseen_" + load + "kg", "Unseen load " + load + " kg", lists);
  }
  return written;
}

}  // namespace liftload::eval

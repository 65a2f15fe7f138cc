#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "liftload/config.hpp"
#include "liftload/dataset.hpp"
#include "liftload/estimator.hpp"
#include "liftload/eval.hpp"
#include "liftload/image.hpp"
#include "liftload/ingest.hpp"
#include "liftload/model.hpp"
#include "liftload/pressmap.hpp"
#include "liftload/report.hpp"
#include "liftload/synth.hpp"

namespace fs = std::filesystem;
using namespace liftload;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitCompute = 3;
constexpr int kExitRuntime = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoConvergence:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFinitePrediction:
    case ErrorCode::EmptyWindow:
      return kExitCompute;
    case ErrorCode::Io:
      return kExitRuntime;
    default:
      return kExitInput;
  }
}

// Pipeline overrides shared by every subcommand; unset flags keep the
// config-file (or default) value.
struct PipelineFlags {
  std::string config;
  std::optional<double> sample_rate_hz, cutoff_hz, baseline_window_s, lift_window_s;
  std::optional<double> trim_low, trim_high;
  std::optional<int> filter_order;
  std::optional<std::size_t> aggregation_count;
  std::optional<std::uint64_t> split_seed;
  std::vector<double> unseen_loads_kg;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key = value settings file")->check(CLI::ExistingFile);
    cmd->add_option("--sample-rate", sample_rate_hz, "sampling rate in Hz");
    cmd->add_option("--cutoff", cutoff_hz, "low-pass cutoff in Hz");
    cmd->add_option("--filter-order", filter_order, "low-pass order (2)");
    cmd->add_option("--baseline-window", baseline_window_s, "baseline window in seconds");
    cmd->add_option("--lift-window", lift_window_s, "lift window in seconds");
    cmd->add_option("--aggregation-count", aggregation_count, "predictions per estimate");
    cmd->add_option("--trim-low", trim_low, "lower trimming quantile");
    cmd->add_option("--trim-high", trim_high, "upper trimming quantile");
    cmd->add_option("--unseen-loads", unseen_loads_kg, "loads held out of training (kg)")
        ->delimiter(',');
    cmd->add_option("--split-seed", split_seed, "seed of the validation split");
  }

  Settings settings() const { return config.empty() ? Settings{} : load_settings(config); }

  PipelineConfig resolve() const {
    PipelineConfig cfg = pipeline_config_from(settings());
    if (sample_rate_hz) cfg.sample_rate_hz = *sample_rate_hz;
    if (cutoff_hz) cfg.cutoff_hz = *cutoff_hz;
    if (filter_order) cfg.filter_order = *filter_order;
    if (baseline_window_s) cfg.baseline_window_s = *baseline_window_s;
    if (lift_window_s) cfg.lift_window_s = *lift_window_s;
    if (aggregation_count) cfg.aggregation_count = *aggregation_count;
    if (trim_low) cfg.trim_low = *trim_low;
    if (trim_high) cfg.trim_high = *trim_high;
    if (!unseen_loads_kg.empty()) cfg.unseen_loads_kg = unseen_loads_kg;
    if (split_seed) cfg.split_seed = *split_seed;
    cfg.validate();
    return cfg;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

// --- preprocess -----------------------------------------------------------

struct PreprocessArgs {
  std::vector<std::string> manifests;
  std::string out;
  bool skip_filter = false;
  PipelineFlags pipeline;
};

int run_preprocess(const PreprocessArgs& a) {
  const auto cfg = a.pipeline.resolve();
  std::vector<LabeledSample> all;
  for (const auto& m : a.manifests) {
    const auto rec = ingest::parse_session(m);
    auto samples = ingest::label_session(rec, cfg, a.skip_filter);
    std::cerr << m << ": " << samples.size() << " samples\n";
    all.insert(all.end(), std::make_move_iterator(samples.begin()),
               std::make_move_iterator(samples.end()));
  }
  ensure_dir(a.out);
  const auto path = fs::path(a.out) / "dataset.csv";
  write_dataset(path, all);
  std::cout << "wrote " << all.size() << " samples to " << path.string() << '\n';
  return kExitOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string model;
  std::string out;
  PipelineFlags pipeline;
};

int run_train(const TrainArgs& a) {
  const auto kind = model_kind_from_string(a.model);
  if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown model '" + a.model + "'");
  const auto cfg = a.pipeline.resolve();
  const auto params = model_params_from(a.pipeline.settings());
  const auto corpus = read_dataset(a.dataset);
  auto spec = eval::SplitSpec::from(cfg);
  spec.allow_missing_sessions = true;
  const auto split = eval::build_split(corpus, spec);
  for (const auto& s : split.incomplete_subjects) {
    std::cerr << "warning: subject " << s << " lacks some sessions\n";
  }
  if (split.train.empty()) throw Error(ErrorCode::EmptyInput, "no training samples after split");
  const auto train = eval::gather(corpus, split.train);
  const auto val = eval::gather(corpus, split.val);
  const auto x_val = feature_matrix(val);
  const auto y_val = label_vector(val);

  const auto trained =
      train_model(*kind, feature_matrix(train), label_vector(train), x_val, y_val, params);
  save_model(a.out, trained);

  std::cout << "model " << a.model << ": " << train.size() << " train / " << val.size()
            << " val samples, " << trained.report.epochs << " iterations, "
            << (trained.report.converged ? "converged" : "not converged") << ", "
            << trained.report.wall_time_s << " s\n";
  std::cout << "train loss " << trained.report.train_loss << '\n';
  if (!val.empty()) {
    std::vector<double> pred(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) pred[i] = predict(trained.model, x_val.row(i));
    std::cout << "val MAE " << eval::mae(pred, y_val) << " kg\n";
  }
  return kExitOk;
}

// --- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string dataset;
  std::vector<std::string> models;
  std::string report;
  std::string plots;
  std::string csv;
  bool allow_missing = false;
  PipelineFlags pipeline;
};

int run_evaluate(const EvaluateArgs& a) {
  eval::ProtocolConfig pc;
  pc.pipeline = a.pipeline.resolve();
  pc.params = model_params_from(a.pipeline.settings());
  pc.allow_missing_sessions = a.allow_missing;
  pc.models.clear();
  for (const auto& m : a.models) {
    const auto kind = model_kind_from_string(m);
    if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown model '" + m + "'");
    pc.models.push_back(*kind);
  }
  const auto corpus = read_dataset(a.dataset);
  const auto report = eval::run_protocol(corpus, pc);
  eval::save_report(a.report, report);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + a.csv);
    out << eval::report_to_csv(report);
  }
  if (!a.plots.empty()) eval::write_box_plots(report, a.plots);

  for (const auto& s : report.summaries) {
    std::cout << s.model << ": MAE " << s.mean_mae << " kg (raw " << s.raw_mae << ", unseen "
              << s.unseen_mean_mae << ")\n";
  }
  for (const auto& t : report.tests) {
    std::cout << t.grouping << ' ' << t.group << ' ' << t.model_a << " vs " << t.model_b
              << ": p = " << t.p << ' ' << t.stars << '\n';
  }
  return kExitOk;
}

// --- render-maps ----------------------------------------------------------

struct RenderArgs {
  std::string dataset;
  std::string layout;
  std::string scale_from;
  std::string out;
  std::size_t grid = 128;
  PipelineFlags pipeline;
};

int run_render(const RenderArgs& a) {
  const auto cfg = a.pipeline.resolve();
  const auto layout = a.layout.empty() ? pressmap::default_layout() : pressmap::read_layout(a.layout);
  const auto scale_corpus = read_dataset(a.scale_from.empty() ? a.dataset : a.scale_from);
  auto spec = eval::SplitSpec::from(cfg);
  spec.allow_missing_sessions = true;
  const auto split = eval::build_split(scale_corpus, spec);
  std::vector<FeatureVector> train_features;
  for (auto i : split.train) train_features.push_back(scale_corpus[i].features);
  const auto scale = pressmap::fit_color_scale(train_features);

  const auto corpus = read_dataset(a.dataset);
  ensure_dir(a.out);
  for (const auto& s : corpus) {
    const auto img = pressmap::render_sample(s.features, layout, scale, {}, a.grid);
    std::ostringstream name;
    name << s.subject_id << "_s" << s.session_index << "_" << s.frame_timestamp_ms << ".png";
    write_png(fs::path(a.out) / name.str(), img);
  }
  std::cout << "rendered " << corpus.size() << " maps (scale mean " << scale.mean << ", sd "
            << scale.stddev << ")\n";
  return kExitOk;
}

// --- stream ---------------------------------------------------------------

class LineSink {
public:
  virtual ~LineSink() = default;
  virtual void write(const std::string& line) = 0;
};

class StdoutSink : public LineSink {
public:
  void write(const std::string& line) override {
    std::cout << line << '\n' << std::flush;
    if (!std::cout) throw Error(ErrorCode::Io, "standard output closed");
  }
};

class TcpSink : public LineSink {
public:
  explicit TcpSink(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "--tcp expects HOST:PORT");
    }
    const std::string host = endpoint.substr(0, colon);
    const std::string port = endpoint.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
      throw Error(ErrorCode::Io, "cannot resolve " + endpoint);
    }
    for (auto* p = res; p != nullptr; p = p->ai_next) {
      fd_ = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    freeaddrinfo(res);
    if (fd_ < 0) throw Error(ErrorCode::Io, "cannot connect to " + endpoint);
  }
  ~TcpSink() override {
    if (fd_ >= 0) ::close(fd_);
  }
  void write(const std::string& line) override {
    const std::string data = line + "\n";
    std::size_t sent = 0;
    while (sent < data.size()) {
      const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        throw Error(ErrorCode::Io, std::string("connection lost: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

private:
  int fd_ = -1;
};

struct StreamArgs {
  std::string manifest;
  std::string model;
  std::string rate = "x1";
  std::string tcp;
  PipelineFlags pipeline;
};

int run_stream(const StreamArgs& a) {
  const auto cfg = a.pipeline.resolve();
  const auto rec = ingest::parse_session(a.manifest);
  const auto trained = load_model(a.model);
  double speed = 0.0;  // 0: no pacing
  if (a.rate == "x1") speed = 1.0;
  else if (a.rate == "x10") speed = 10.0;
  else if (a.rate != "max") throw Error(ErrorCode::InvalidConfig, "--rate must be x1, x10 or max");

  std::unique_ptr<LineSink> sink;
  if (a.tcp.empty()) sink = std::make_unique<StdoutSink>();
  else sink = std::make_unique<TcpSink>(a.tcp);

  // Producer replays frames at the requested cadence; back-pressure from the
  // bounded queue blocks it, so no frame is dropped.
  BoundedQueue<Frame> queue(64);
  std::thread producer([&] {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t first_ms = rec.frames.empty() ? 0 : rec.frames.front().timestamp_ms;
    for (const auto& f : rec.frames) {
      if (speed > 0.0) {
        const auto due = t0 + std::chrono::duration<double, std::milli>(
                                  static_cast<double>(f.timestamp_ms - first_ms) / speed);
        std::this_thread::sleep_until(due);
      }
      if (!queue.push(f)) return;
    }
    queue.close();
  });

  StreamEstimator estimator(trained.model, cfg, rec.schedule, rec.prefiltered);
  std::size_t emitted = 0;
  try {
    while (auto frame = queue.pop()) {
      if (auto est = estimator.push(*frame)) {
        sink->write(estimate_to_json(*est));
        ++emitted;
      }
    }
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  producer.join();
  std::cerr << "emitted " << emitted << " estimates\n";
  return kExitOk;
}

// --- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t subjects = 5;
  std::size_t sessions = 3;
  double noise = 0.01 * kFullScaleRaw;
  double drift = 0.0;
  std::uint64_t seed = 2024;
  bool saturating = false;
};

int run_synth(const SynthArgs& a) {
  synth::CorpusOptions opts;
  opts.subjects = a.subjects;
  opts.sessions = a.sessions;
  opts.noise_sigma = a.noise;
  opts.drift_per_s = a.drift;
  opts.seed = a.seed;
  opts.kind = a.saturating ? synth::Response::Saturating : synth::Response::Affine;
  ensure_dir(a.out);
  for (const auto& s : synth::generate_corpus(opts)) {
    const auto stem = s.recording.subject_id + "_s" + std::to_string(s.recording.session_index);
    std::cout << ingest::write_session(s.recording, a.out, stem).string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Lifted-load estimation from insole pressure data"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "filter, segment and label sessions");
  c_pre->add_option("--manifest", pre.manifests, "session manifest(s)")->required();
  c_pre->add_option("--out", pre.out, "output directory")->required();
  c_pre->add_flag("--skip-filter", pre.skip_filter, "data is already low-pass filtered");
  pre.pipeline.attach(c_pre);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "fit one model on the training split");
  c_tr->add_option("--dataset", tr.dataset, "labelled dataset CSV")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--model", tr.model, "svr, mlp or enet")
      ->required()
      ->check(CLI::IsMember({"svr", "mlp", "enet"}));
  c_tr->add_option("--out", tr.out, "model file")->required();
  tr.pipeline.attach(c_tr);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "run the train/test protocol");
  c_ev->add_option("--dataset", ev.dataset, "labelled dataset CSV")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--models", ev.models, "models to compare")
      ->required()
      ->check(CLI::IsMember({"svr", "mlp", "enet"}));
  c_ev->add_option("--report", ev.report, "report JSON")->required();
  c_ev->add_option("--plots", ev.plots, "directory for SVG box plots");
  c_ev->add_option("--csv", ev.csv, "flat subject,model,load,mae table");
  c_ev->add_flag("--allow-missing-sessions", ev.allow_missing, "tolerate incomplete subjects");
  ev.pipeline.attach(c_ev);

  RenderArgs rm;
  auto* c_rm = app.add_subcommand("render-maps", "render pressure maps as PNG");
  c_rm->add_option("--dataset", rm.dataset, "labelled dataset CSV")->required()->check(CLI::ExistingFile);
  c_rm->add_option("--layout", rm.layout, "sensor layout JSON (built-in if omitted)")
      ->check(CLI::ExistingFile);
  c_rm->add_option("--scale-from", rm.scale_from, "dataset whose training split fixes the colour scale")
      ->check(CLI::ExistingFile);
  c_rm->add_option("--out", rm.out, "output directory")->required();
  c_rm->add_option("--grid", rm.grid, "interpolation grid per foot")->check(CLI::Range(8, 1024));
  rm.pipeline.attach(c_rm);

  StreamArgs st;
  auto* c_st = app.add_subcommand("stream", "replay a session through the online estimator");
  c_st->add_option("--manifest", st.manifest, "session manifest")->required();
  c_st->add_option("--model", st.model, "model file")->required()->check(CLI::ExistingFile);
  c_st->add_option("--rate", st.rate, "x1, x10 or max")->check(CLI::IsMember({"x1", "x10", "max"}));
  c_st->add_option("--tcp", st.tcp, "send estimates to HOST:PORT instead of stdout");
  st.pipeline.attach(c_st);

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "write a synthetic corpus");
  c_sy->add_option("--out", sy.out, "output directory")->required();
  c_sy->add_option("--subjects", sy.subjects, "number of subjects");
  c_sy->add_option("--sessions", sy.sessions, "sessions per subject");
  c_sy->add_option("--noise", sy.noise, "noise sigma in raw units");
  c_sy->add_option("--drift", sy.drift, "drift in raw units per second");
  c_sy->add_option("--seed", sy.seed, "generator seed");
  c_sy->add_flag("--saturating", sy.saturating, "saturating instead of affine response");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*c_pre) return run_preprocess(pre);
    if (*c_tr) return run_train(tr);
    if (*c_ev) return run_evaluate(ev);
    if (*c_rm) return run_render(rm);
    if (*c_st) return run_stream(st);
    if (*c_sy) return run_synth(sy);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInput;
}

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "liftload/config.hpp"
#include "liftload/core.hpp"
#include "liftload/model.hpp"

namespace liftload::eval {

struct SplitSpec {
  std::vector<int> train_sessions{1, 2};
  std::vector<int> test_sessions{3};
  std::vector<double> unseen_loads_kg{3.0, 6.0, 9.0};  // removed from train/val only
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  // When false, a subject lacking any listed session raises MissingSession.
  bool allow_missing_sessions = false;

  static SplitSpec from(const PipelineConfig& cfg);
};

// Indices into the corpus passed to build_split.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<std::string> incomplete_subjects;  // only with allow_missing_sessions
};

// Train/val come from the training sessions minus unseen loads; validation
// is stratified per load level with the split seed; test is every
// labelled sample of the test sessions.
Split build_split(std::span<const LabeledSample> corpus, const SplitSpec& spec);

std::vector<LabeledSample> gather(std::span<const LabeledSample> corpus,
                                  std::span<const std::size_t> indices);

// Throws LengthMismatch or EmptyInput.
double mae(std::span<const double> predictions, std::span<const double> labels);
std::vector<double> mae_samples(std::span<const double> predictions,
                                std::span<const double> labels);

enum class PMethod { Auto, Exact, Normal };

struct MannWhitneyResult {
  double u = 0.0;  // statistic of the first sample
  double p = 1.0;  // two-sided
  bool exact = false;
};

// Midranks for ties. Auto picks the exact null distribution when both
// samples have at most 8 values, else the tie- and continuity-corrected
// normal approximation. Throws EmptyInput.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 PMethod method = PMethod::Auto);

// "***" < 0.001, "**" < 0.01, "*" < 0.05, "ns" otherwise.
std::string significance_stars(double p);

struct ProtocolConfig {
  PipelineConfig pipeline;
  std::vector<ModelKind> models{ModelKind::ElasticNet, ModelKind::Svr, ModelKind::Mlp};
  ModelParams params;
  bool allow_missing_sessions = false;
};

struct ModelSummary {
  std::string model;
  double mean_mae = 0.0;         // over aggregated windows, all test samples
  double raw_mae = 0.0;          // over individual test samples
  double unseen_mean_mae = 0.0;  // aggregated windows of unseen loads only
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::size_t epochs = 0;
  bool converged = false;
  bool operator==(const ModelSummary&) const = default;
};

struct LoadMae {
  std::string subject;
  std::string model;
  double load_kg = 0.0;
  double mae = 0.0;  // aggregated windows
  double raw_mae = 0.0;
  std::size_t windows = 0;
  bool operator==(const LoadMae&) const = default;
};

struct PairTest {
  std::string grouping;  // "subject" or "unseen_load"
  std::string group;     // subject id or load in kg
  std::string model_a;
  std::string model_b;
  double u = 0.0;
  double p = 1.0;
  bool exact = false;
  std::string stars;
  bool operator==(const PairTest&) const = default;
};

// model -> absolute errors of aggregated windows
using ErrorLists = std::map<std::string, std::vector<double>>;

struct EvalReport {
  std::vector<std::string> models;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::size_t test_samples = 0;
  std::vector<double> train_loads_kg;
  std::vector<double> test_loads_kg;
  std::vector<double> unseen_loads_kg;
  std::vector<ModelSummary> summaries;
  std::map<std::string, ErrorLists> subject_errors;  // subject -> model -> errors
  std::map<std::string, ErrorLists> unseen_errors;   // load key -> model -> errors
  std::vector<LoadMae> per_load;
  std::vector<PairTest> tests;
  bool operator==(const EvalReport&) const = default;
};

// Canonical key text for a load level ("3", "6.5").
std::string load_key(double kg);

// Trims consecutive runs of the same (subject, session, load) into
// tumbling windows and returns the aggregated estimate with its label.
struct WindowedPrediction {
  std::string subject;
  double load_kg = 0.0;
  double estimate = 0.0;
};
std::vector<WindowedPrediction> aggregate_runs(std::span<const LabeledSample> samples,
                                               std::span<const double> predictions,
                                               const PipelineConfig& cfg);

// Trains every requested model concurrently on the pooled training split
// and scores the test split. Training errors are rethrown with the model
// name prepended.
EvalReport run_protocol(std::span<const LabeledSample> corpus, const ProtocolConfig& cfg);

}  // namespace liftload::eval

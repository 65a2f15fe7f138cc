#include "liftload/eval.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <set>
#include <thread>

#include "liftload/aggregate.hpp"
#include "liftload/dataset.hpp"

namespace liftload::eval {

namespace {

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

bool is_unseen(const std::vector<double>& unseen, double kg) {
  return std::any_of(unseen.begin(), unseen.end(),
                     [&](double u) { return std::abs(u - kg) < 1e-9; });
}

// Ranks doubled so that midranks stay integral.
std::vector<long> doubled_midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> order(pooled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<long> ranks(pooled.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    // positions i..j (0-based) share rank ((i+1)+(j+1))/2
    const long twice = static_cast<long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = twice;
    i = j + 1;
  }
  return ranks;
}

double exact_p(const std::vector<long>& ranks2, std::size_t n1, double u) {
  const std::size_t n = ranks2.size();
  long total = 0;
  for (long r : ranks2) total += r;
  // count[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<double>> count(n1 + 1, std::vector<double>(total + 1, 0.0));
  count[0][0] = 1.0;
  for (std::size_t item = 0; item < n; ++item) {
    const long r = ranks2[item];
    for (std::size_t k = std::min(n1, item + 1); k >= 1; --k) {
      for (long s = total; s >= r; --s) count[k][s] += count[k - 1][s - r];
    }
  }
  const double n1d = static_cast<double>(n1);
  const double n2d = static_cast<double>(n - n1);
  const double mu = n1d * n2d / 2.0;
  const double observed = std::abs(u - mu);
  double hits = 0.0, all = 0.0;
  for (long s = 0; s <= total; ++s) {
    const double c = count[n1][s];
    if (c == 0.0) continue;
    all += c;
    const double us = static_cast<double>(s) / 2.0 - n1d * (n1d + 1.0) / 2.0;
    if (std::abs(us - mu) >= observed - 1e-9) hits += c;
  }
  return std::min(1.0, hits / all);
}

double normal_p(const std::vector<double>& pooled, std::size_t n1, double u) {
  const double n = static_cast<double>(pooled.size());
  const double n1d = static_cast<double>(n1);
  const double n2d = n - n1d;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = n1d * n2d / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double dev = std::abs(u - n1d * n2d / 2.0) - 0.5;
  if (dev <= 0.0) return 1.0;
  return std::clamp(std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)), 0.0, 1.0);
}

struct RunKey {
  std::string subject;
  int session = 0;
  double load = 0.0;
  bool operator==(const RunKey&) const = default;
};

}  // namespace

SplitSpec SplitSpec::from(const PipelineConfig& cfg) {
  SplitSpec s;
  s.unseen_loads_kg = cfg.unseen_loads_kg;
  s.seed = cfg.split_seed;
  return s;
}

Split build_split(std::span<const LabeledSample> corpus, const SplitSpec& spec) {
  if (!(spec.val_fraction >= 0.0 && spec.val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "validation fraction must lie in [0, 1)");
  }
  std::map<std::string, std::set<int>> sessions;
  for (const auto& s : corpus) sessions[s.subject_id].insert(s.session_index);

  Split split;
  for (const auto& [subject, have] : sessions) {
    std::vector<int> wanted = spec.train_sessions;
    wanted.insert(wanted.end(), spec.test_sessions.begin(), spec.test_sessions.end());
    for (int w : wanted) {
      if (have.count(w)) continue;
      if (!spec.allow_missing_sessions) {
        throw Error(ErrorCode::MissingSession,
                    "subject " + subject + " has no session " + std::to_string(w));
      }
      split.incomplete_subjects.push_back(subject);
      break;
    }
  }

  std::map<double, std::vector<std::size_t>> pool_by_load;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    if (!s.label_kg) continue;
    if (contains(spec.test_sessions, s.session_index)) {
      split.test.push_back(i);
    } else if (contains(spec.train_sessions, s.session_index) &&
               !is_unseen(spec.unseen_loads_kg, *s.label_kg)) {
      pool_by_load[*s.label_kg].push_back(i);
    }
  }

  std::mt19937_64 rng(spec.seed);
  for (auto& [load, idx] : pool_by_load) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val =
        static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(idx.size())));
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

std::vector<LabeledSample> gather(std::span<const LabeledSample> corpus,
                                  std::span<const std::size_t> indices) {
  std::vector<LabeledSample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(corpus[i]);
  return out;
}

std::vector<double> mae_samples(std::span<const double> predictions,
                                std::span<const double> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  }
  if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to score");
  std::vector<double> out(predictions.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(predictions[i] - labels[i]);
  return out;
}

double mae(std::span<const double> predictions, std::span<const double> labels) {
  const auto errors = mae_samples(predictions, labels);
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 PMethod method) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "Mann-Whitney needs two samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks2 = doubled_midranks(pooled);
  long r1 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += ranks2[i];
  const double n1 = static_cast<double>(a.size());

  MannWhitneyResult res;
  res.u = static_cast<double>(r1) / 2.0 - n1 * (n1 + 1.0) / 2.0;
  const bool small = a.size() <= 8 && b.size() <= 8;
  res.exact = method == PMethod::Exact || (method == PMethod::Auto && small);
  res.p = res.exact ? exact_p(ranks2, a.size(), res.u) : normal_p(pooled, a.size(), res.u);
  return res;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "ns";
}

std::string load_key(double kg) { return format_double(kg); }

std::vector<WindowedPrediction> aggregate_runs(std::span<const LabeledSample> samples,
                                               std::span<const double> predictions,
                                               const PipelineConfig& cfg) {
  if (samples.size() != predictions.size()) {
    throw Error(ErrorCode::LengthMismatch, "one prediction per sample expected");
  }
  std::vector<WindowedPrediction> out;
  Aggregator agg(cfg.aggregation_count, cfg.trim_low, cfg.trim_high);
  std::optional<RunKey> current;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.label_kg) continue;
    RunKey key{s.subject_id, s.session_index, *s.label_kg};
    if (!current || !(*current == key)) {
      agg.reset();  // partial windows are dropped
      current = key;
    }
    if (auto est = agg.push(predictions[i])) {
      out.push_back({key.subject, key.load, est->load_kg});
    }
  }
  return out;
}

EvalReport run_protocol(std::span<const LabeledSample> corpus, const ProtocolConfig& cfg) {
  cfg.pipeline.validate();
  if (cfg.models.empty()) throw Error(ErrorCode::InvalidConfig, "no models requested");
  auto spec = SplitSpec::from(cfg.pipeline);
  spec.allow_missing_sessions = cfg.allow_missing_sessions;
  const Split split = build_split(corpus, spec);
  if (split.train.empty() || split.test.empty()) {
    throw Error(ErrorCode::EmptyInput, "split left no training or no test samples");
  }
  const auto train = gather(corpus, split.train);
  const auto val = gather(corpus, split.val);
  const auto test = gather(corpus, split.test);
  const Matrix x_train = feature_matrix(train);
  const auto y_train = label_vector(train);
  const Matrix x_val = feature_matrix(val);
  const auto y_val = label_vector(val);
  const Matrix x_test = feature_matrix(test);
  const auto y_test = label_vector(test);

  struct Outcome {
    TrainingReport report;
    std::vector<double> predictions;
  };
  std::vector<std::future<Outcome>> jobs;
  for (auto kind : cfg.models) {
    jobs.push_back(std::async(std::launch::async, [&, kind] {
      try {
        auto trained = train_model(kind, x_train, y_train, x_val, y_val, cfg.params);
        Outcome o{trained.report, std::vector<double>(x_test.rows())};
        for (std::size_t i = 0; i < x_test.rows(); ++i) {
          o.predictions[i] = predict(trained.model, x_test.row(i));
          if (!std::isfinite(o.predictions[i])) {
            throw Error(ErrorCode::NonFinitePrediction, "prediction for test sample " +
                                                            std::to_string(i) + " is not finite");
          }
        }
        return o;
      } catch (const Error& e) {
        throw Error(e.code(), std::string(to_string(kind)) + ": " + e.what());
      }
    }));
  }
  // Wait for every job before rethrowing so no task outlives the inputs.
  for (auto& j : jobs) j.wait();

  EvalReport report;
  report.train_samples = train.size();
  report.val_samples = val.size();
  report.test_samples = test.size();
  std::set<double> train_loads(y_train.begin(), y_train.end());
  std::set<double> test_loads(y_test.begin(), y_test.end());
  report.train_loads_kg.assign(train_loads.begin(), train_loads.end());
  report.test_loads_kg.assign(test_loads.begin(), test_loads.end());
  report.unseen_loads_kg = cfg.pipeline.unseen_loads_kg;
  std::sort(report.unseen_loads_kg.begin(), report.unseen_loads_kg.end());

  for (std::size_t m = 0; m < cfg.models.size(); ++m) {
    const std::string name(to_string(cfg.models[m]));
    report.models.push_back(name);
    const Outcome o = jobs[m].get();
    const auto raw = mae_samples(o.predictions, y_test);
    const auto windows = aggregate_runs(test, o.predictions, cfg.pipeline);

    ModelSummary summary;
    summary.model = name;
    summary.train_loss = o.report.train_loss;
    summary.val_loss = o.report.val_loss;
    summary.epochs = o.report.epochs;
    summary.converged = o.report.converged;
    double raw_sum = 0.0;
    for (double e : raw) raw_sum += e;
    summary.raw_mae = raw_sum / static_cast<double>(raw.size());

    // (subject, load) -> window errors, raw errors
    std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>>
        cells;
    double win_sum = 0.0, unseen_sum = 0.0;
    std::size_t unseen_n = 0;
    for (const auto& w : windows) {
      const double err = std::abs(w.estimate - w.load_kg);
      win_sum += err;
      report.subject_errors[w.subject][name].push_back(err);
      cells[{w.subject, w.load_kg}].first.push_back(err);
      if (is_unseen(report.unseen_loads_kg, w.load_kg)) {
        report.unseen_errors[load_key(w.load_kg)][name].push_back(err);
        unseen_sum += err;
        ++unseen_n;
      }
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      cells[{test[i].subject_id, y_test[i]}].second.push_back(raw[i]);
    }
    summary.mean_mae = windows.empty() ? summary.raw_mae : win_sum / static_cast<double>(windows.size());
    summary.unseen_mean_mae = unseen_n == 0 ? 0.0 : unseen_sum / static_cast<double>(unseen_n);
    report.summaries.push_back(summary);

    for (const auto& [key, lists] : cells) {
      LoadMae row{key.first, name, key.second, 0.0, 0.0, lists.first.size()};
      for (double e : lists.first) row.mae += e;
      if (!lists.first.empty()) row.mae /= static_cast<double>(lists.first.size());
      for (double e : lists.second) row.raw_mae += e;
      if (!lists.second.empty()) row.raw_mae /= static_cast<double>(lists.second.size());
      report.per_load.push_back(row);
    }
  }

  auto add_tests = [&](const std::string& grouping, const std::map<std::string, ErrorLists>& by) {
    for (const auto& [group, lists] : by) {
      for (std::size_t a = 0; a < report.models.size(); ++a) {
        for (std::size_t b = a + 1; b < report.models.size(); ++b) {
          const auto ia = lists.find(report.models[a]);
          const auto ib = lists.find(report.models[b]);
          if (ia == lists.end() || ib == lists.end() || ia->second.empty() || ib->second.empty()) {
            continue;
          }
          const auto r = mann_whitney_u(ia->second, ib->second);
          report.tests.push_back({grouping, group, report.models[a], report.models[b], r.u, r.p,
                                  r.exact, significance_stars(r.p)});
        }
      }
    }
  };
  add_tests("subject", report.subject_errors);
  add_tests("unseen_load", report.unseen_errors);
  return report;
}

}  // namespace liftload::eval

#include "liftload/elastic_net.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace liftload {

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

void check_finite(const Matrix& x, std::span<const double> y) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite target value");
  }
}

}  // namespace

double ElasticNetModel::predict(std::span<const double> x) const {
  double acc = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * x[j];
  return acc;
}

double elastic_net_objective(const Matrix& x, std::span<const double> y,
                             std::span<const double> w, double intercept, double alpha,
                             double l1_ratio) {
  const std::size_t n = x.rows();
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - intercept;
    const auto row = x.row(i);
    for (std::size_t j = 0; j < w.size(); ++j) r -= row[j] * w[j];
    sse += r * r;
  }
  double l1 = 0.0, l2 = 0.0;
  for (double v : w) {
    l1 += std::abs(v);
    l2 += v * v;
  }
  return sse / (2.0 * static_cast<double>(n)) +
         alpha * (l1_ratio * l1 + 0.5 * (1.0 - l1_ratio) * l2);
}

ElasticNetFit fit_elastic_net(const Matrix& x, std::span<const double> y,
                              const ElasticNetParams& params) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "elastic net needs at least one sample");
  if (y.size() != n) throw Error(ErrorCode::LengthMismatch, "X and y lengths differ");
  if (!(params.alpha >= 0.0) || !(params.l1_ratio >= 0.0) || !(params.l1_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "alpha must be >= 0 and l1_ratio in [0, 1]");
  }
  check_finite(x, y);

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> x_mean(d, 0.0);
  double y_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    for (std::size_t j = 0; j < d; ++j) x_mean[j] += row[j];
    y_mean += y[i];
  }
  for (auto& m : x_mean) m *= inv_n;
  y_mean *= inv_n;

  // Gram form of the centred problem: gram = Xc'Xc/n, xty = Xc'yc/n.
  std::vector<double> gram(d * d, 0.0);
  std::vector<double> xty(d, 0.0);
  double yy = 0.0;
  std::vector<double> xc(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    for (std::size_t j = 0; j < d; ++j) xc[j] = row[j] - x_mean[j];
    const double yc = y[i] - y_mean;
    yy += yc * yc;
    for (std::size_t j = 0; j < d; ++j) {
      xty[j] += xc[j] * yc;
      for (std::size_t k = j; k < d; ++k) gram[j * d + k] += xc[j] * xc[k];
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    xty[j] *= inv_n;
    for (std::size_t k = j; k < d; ++k) {
      gram[j * d + k] *= inv_n;
      gram[k * d + j] = gram[j * d + k];
    }
  }
  yy *= inv_n;

  const double l1_pen = params.alpha * params.l1_ratio;
  const double l2_pen = params.alpha * (1.0 - params.l1_ratio);

  std::vector<double> w(d, 0.0);
  std::vector<double> gw(d, 0.0);  // gram * w
  auto objective = [&] {
    double quad = 0.0, lin = 0.0, l1 = 0.0, l2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      quad += w[j] * gw[j];
      lin += w[j] * xty[j];
      l1 += std::abs(w[j]);
      l2 += w[j] * w[j];
    }
    return 0.5 * yy - lin + 0.5 * quad + l1_pen * l1 + 0.5 * l2_pen * l2;
  };

  TrainingReport report;
  std::size_t sweep = 0;
  for (; sweep < params.max_sweeps; ++sweep) {
    double max_step = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double gjj = gram[j * d + j];
      const double denom = gjj + l2_pen;
      const double rho = xty[j] - (gw[j] - gjj * w[j]);
      const double updated = denom > 0.0 ? soft_threshold(rho, l1_pen) / denom : 0.0;
      const double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t k = 0; k < d; ++k) gw[k] += gram[k * d + j] * delta;
        w[j] = updated;
      }
      max_step = std::max(max_step, std::abs(delta));
    }
    report.trace.push_back(objective());
    if (max_step < params.tol) {
      report.converged = true;
      ++sweep;
      break;
    }
  }

  if (!report.converged) {
    // Largest violation of the subgradient optimality conditions.
    double kkt = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = xty[j] - gw[j] - l2_pen * w[j];
      const double v = w[j] != 0.0 ? std::abs(g - l1_pen * (w[j] > 0.0 ? 1.0 : -1.0))
                                   : std::max(0.0, std::abs(g) - l1_pen);
      kkt = std::max(kkt, v);
    }
    throw Error(ErrorCode::NoConvergence,
                "coordinate descent stopped after " + std::to_string(params.max_sweeps) +
                    " sweeps with KKT residual " + std::to_string(kkt));
  }

  ElasticNetFit fit;
  fit.model.weights = w;
  fit.model.alpha = params.alpha;
  fit.model.l1_ratio = params.l1_ratio;
  double b = y_mean;
  for (std::size_t j = 0; j < d; ++j) b -= x_mean[j] * w[j];
  fit.model.intercept = b;

  report.epochs = sweep;
  report.train_loss = report.trace.empty() ? objective() : report.trace.back();
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  fit.report = std::move(report);
  return fit;
}

}  // namespace liftload

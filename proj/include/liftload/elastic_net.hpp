#pragma once

#include <span>
#include <vector>

#include "liftload/core.hpp"
#include "liftload/training_report.hpp"

namespace liftload {

struct ElasticNetParams {
  double alpha = 0.1;
  double l1_ratio = 0.1;
  // Stop once the largest coordinate update falls below `tol`; running out
  // of sweeps first raises NoConvergence.
  double tol = 1e-6;
  std::size_t max_sweeps = 10000;
};

struct ElasticNetModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 0.1;
  double l1_ratio = 0.1;

  double predict(std::span<const double> x) const;
};

struct ElasticNetFit {
  ElasticNetModel model;
  TrainingReport report;
};

// Minimises (1/2n)|y - Xw - b|^2 + alpha (rho |w|_1 + (1 - rho)/2 |w|_2^2)
// by cyclic coordinate descent; the intercept is unpenalised.
ElasticNetFit fit_elastic_net(const Matrix& x, std::span<const double> y,
                              const ElasticNetParams& params = {});

double elastic_net_objective(const Matrix& x, std::span<const double> y,
                             std::span<const double> w, double intercept, double alpha,
                             double l1_ratio);

}  // namespace liftload

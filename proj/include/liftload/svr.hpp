#pragma once

#include <span>
#include <vector>

#include "liftload/core.hpp"
#include "liftload/training_report.hpp"

namespace liftload {

// K(u, v) = (gamma <u, v> + coef0)^degree
struct PolyKernel {
  int degree = 2;
  double gamma = 1e-8;
  double coef0 = 10.0;

  double operator()(std::span<const double> u, std::span<const double> v) const;
};

struct SvrParams {
  PolyKernel kernel;
  double C = 1.0;
  double epsilon = 1.3;
  double tol = 1e-3;  // maximal KKT violation at termination
  std::size_t max_iterations = 100000;
  std::size_t cache_mb = 512;
};

struct SvrModel {
  PolyKernel kernel;
  double C = 1.0;
  double epsilon = 1.3;
  Matrix support_vectors;
  std::vector<double> coefficients;  // alpha_i - alpha_i^*
  double bias = 0.0;

  double predict(std::span<const double> x) const;
};

struct SvrFit {
  SvrModel model;
  TrainingReport report;
  // Dual variables for every training point (alpha_i - alpha_i^*).
  std::vector<double> dual_coefficients;
  // max  -1/2 b'Kb - eps |b|_1 + y'b  subject to sum b = 0, |b_i| <= C
  double dual_objective = 0.0;
};

// epsilon-SVR dual solved by sequential minimal optimisation with
// second-order working-set selection. Throws NonFiniteInput, EmptyInput
// (fewer than 2 points) and NoConvergence (carrying the KKT residual).
SvrFit fit_svr(const Matrix& x, std::span<const double> y, const SvrParams& params = {});

}  // namespace liftload

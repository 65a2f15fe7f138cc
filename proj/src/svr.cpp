#include "liftload/svr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <list>
#include <sstream>

namespace liftload {

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

double int_pow(double base, int exponent) {
  double out = 1.0;
  for (int i = 0; i < exponent; ++i) out *= base;
  return out;
}

// LRU cache of full kernel rows K(r, .) for the n training points.
class KernelRowCache {
public:
  KernelRowCache(const Matrix& x, const PolyKernel& kernel, std::size_t budget_bytes)
      : x_(x), kernel_(kernel), rows_(x.rows()), where_(x.rows(), lru_.end()) {
    const std::size_t row_bytes = std::max<std::size_t>(1, x.rows() * sizeof(double));
    capacity_ = std::max<std::size_t>(2, budget_bytes / row_bytes);
  }

  const std::vector<double>& row(std::size_t r) {
    if (!rows_[r].empty()) {
      lru_.splice(lru_.begin(), lru_, where_[r]);
      return rows_[r];
    }
    if (lru_.size() >= capacity_) {
      const std::size_t victim = lru_.back();
      lru_.pop_back();
      where_[victim] = lru_.end();
      std::vector<double>().swap(rows_[victim]);
    }
    auto& out = rows_[r];
    out.resize(x_.rows());
    const auto xr = x_.row(r);
    for (std::size_t k = 0; k < x_.rows(); ++k) out[k] = kernel_(xr, x_.row(k));
    lru_.push_front(r);
    where_[r] = lru_.begin();
    return out;
  }

private:
  const Matrix& x_;
  PolyKernel kernel_;
  std::vector<std::vector<double>> rows_;
  std::list<std::size_t> lru_;
  std::vector<std::list<std::size_t>::iterator> where_;
  std::size_t capacity_ = 2;
};

// Solves min 1/2 a'Qa + p'a  s.t. s'a = 0, 0 <= a <= C over 2n variables:
// a[0..n) = alpha, a[n..2n) = alpha*, s = (+1.., -1..),
// Q_tk = s_t s_k K(t mod n, k mod n).
class SmoSolver {
public:
  SmoSolver(const Matrix& x, std::span<const double> y, const SvrParams& p)
      : n_(x.rows()),
        l_(2 * x.rows()),
        c_(p.C),
        cache_(x, p.kernel, p.cache_mb * 1024 * 1024),
        alpha_(l_, 0.0),
        grad_(l_),
        sign_(l_),
        diag_(l_),
        lin_(l_) {
    for (std::size_t i = 0; i < n_; ++i) {
      lin_[i] = p.epsilon - y[i];
      lin_[i + n_] = p.epsilon + y[i];
      sign_[i] = 1.0;
      sign_[i + n_] = -1.0;
      const double kii = p.kernel(x.row(i), x.row(i));
      diag_[i] = diag_[i + n_] = kii;
    }
    grad_ = lin_;
  }

  // Returns true on convergence.
  bool solve(double tol, std::size_t max_iterations) {
    for (iterations_ = 0; iterations_ < max_iterations; ++iterations_) {
      std::size_t i = 0, j = 0;
      if (!select_working_set(tol, i, j)) return true;
      update_pair(i, j);
    }
    std::size_t i = 0, j = 0;
    return !select_working_set(tol, i, j);
  }

  std::size_t iterations() const { return iterations_; }
  double kkt_residual() const { return residual_; }

  std::vector<double> coefficients() const {
    std::vector<double> beta(n_);
    for (std::size_t i = 0; i < n_; ++i) beta[i] = alpha_[i] - alpha_[i + n_];
    return beta;
  }

  double bias() const {
    std::size_t free_count = 0;
    double upper = kInf, lower = -kInf, free_sum = 0.0;
    for (std::size_t t = 0; t < l_; ++t) {
      const double yg = sign_[t] * grad_[t];
      if (at_upper(t)) {
        if (sign_[t] < 0) upper = std::min(upper, yg);
        else lower = std::max(lower, yg);
      } else if (at_lower(t)) {
        if (sign_[t] > 0) upper = std::min(upper, yg);
        else lower = std::max(lower, yg);
      } else {
        ++free_count;
        free_sum += yg;
      }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count)
                                      : 0.5 * (upper + lower);
    return -rho;
  }

  // f(x_i) - b for every training point, read off the gradient:
  // grad_i = sum_k K_ik beta_k + eps - y_i.
  std::vector<double> kernel_sums(std::span<const double> y, double epsilon) const {
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = grad_[i] - epsilon + y[i];
    return out;
  }

  // Value of the minimised objective 1/2 a'Qa + p'a.
  double primal_value() const {
    double v = 0.0;
    for (std::size_t t = 0; t < l_; ++t) v += alpha_[t] * (grad_[t] + lin_[t]);
    return 0.5 * v;
  }

private:
  bool at_upper(std::size_t t) const { return alpha_[t] >= c_; }
  bool at_lower(std::size_t t) const { return alpha_[t] <= 0.0; }

  // Q_tk for a fixed t, reading from the cached kernel row of t mod n.
  double q(const std::vector<double>& krow, std::size_t t, std::size_t k) const {
    return sign_[t] * sign_[k] * krow[k % n_];
  }

  bool select_working_set(double tol, std::size_t& out_i, std::size_t& out_j) {
    double gmax = -kInf, gmax2 = -kInf;
    std::ptrdiff_t gmax_idx = -1, gmin_idx = -1;
    double obj_diff_min = kInf;

    for (std::size_t t = 0; t < l_; ++t) {
      if (sign_[t] > 0) {
        if (!at_upper(t) && -grad_[t] >= gmax) {
          gmax = -grad_[t];
          gmax_idx = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!at_lower(t) && grad_[t] >= gmax) {
        gmax = grad_[t];
        gmax_idx = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (gmax_idx < 0) {
      residual_ = 0.0;
      return false;
    }
    const std::size_t i = static_cast<std::size_t>(gmax_idx);
    const auto& krow_i = cache_.row(i % n_);

    for (std::size_t j = 0; j < l_; ++j) {
      if (sign_[j] > 0) {
        if (at_lower(j)) continue;
        const double grad_diff = gmax + grad_[j];
        gmax2 = std::max(gmax2, grad_[j]);
        if (grad_diff > 0) {
          const double quad = diag_[i] + diag_[j] - 2.0 * sign_[i] * q(krow_i, i, j);
          const double obj_diff = -(grad_diff * grad_diff) / (quad > 0 ? quad : kTau);
          if (obj_diff <= obj_diff_min) {
            gmin_idx = static_cast<std::ptrdiff_t>(j);
            obj_diff_min = obj_diff;
          }
        }
      } else {
        if (at_upper(j)) continue;
        const double grad_diff = gmax - grad_[j];
        gmax2 = std::max(gmax2, -grad_[j]);
        if (grad_diff > 0) {
          const double quad = diag_[i] + diag_[j] + 2.0 * sign_[i] * q(krow_i, i, j);
          const double obj_diff = -(grad_diff * grad_diff) / (quad > 0 ? quad : kTau);
          if (obj_diff <= obj_diff_min) {
            gmin_idx = static_cast<std::ptrdiff_t>(j);
            obj_diff_min = obj_diff;
          }
        }
      }
    }
    residual_ = gmax + gmax2;
    if (residual_ < tol || gmin_idx < 0) return false;
    out_i = i;
    out_j = static_cast<std::size_t>(gmin_idx);
    return true;
  }

  void update_pair(std::size_t i, std::size_t j) {
    // Row i is the most recently used entry, so fetching row j (capacity >= 2)
    // cannot evict it.
    const auto& krow_i = cache_.row(i % n_);
    const auto& krow_j = cache_.row(j % n_);
    const double old_i = alpha_[i];
    const double old_j = alpha_[j];
    const double qij = q(krow_i, i, j);

    if (sign_[i] != sign_[j]) {
      double quad = diag_[i] + diag_[j] + 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = alpha_[i] - alpha_[j];
      alpha_[i] += delta;
      alpha_[j] += delta;
      if (diff > 0) {
        if (alpha_[j] < 0) {
          alpha_[j] = 0;
          alpha_[i] = diff;
        }
      } else if (alpha_[i] < 0) {
        alpha_[i] = 0;
        alpha_[j] = -diff;
      }
      if (diff > 0) {
        if (alpha_[i] > c_) {
          alpha_[i] = c_;
          alpha_[j] = c_ - diff;
        }
      } else if (alpha_[j] > c_) {
        alpha_[j] = c_;
        alpha_[i] = c_ + diff;
      }
    } else {
      double quad = diag_[i] + diag_[j] - 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = alpha_[i] + alpha_[j];
      alpha_[i] -= delta;
      alpha_[j] += delta;
      if (sum > c_) {
        if (alpha_[i] > c_) {
          alpha_[i] = c_;
          alpha_[j] = sum - c_;
        }
      } else if (alpha_[j] < 0) {
        alpha_[j] = 0;
        alpha_[i] = sum;
      }
      if (sum > c_) {
        if (alpha_[j] > c_) {
          alpha_[j] = c_;
          alpha_[i] = sum - c_;
        }
      } else if (alpha_[i] < 0) {
        alpha_[i] = 0;
        alpha_[j] = sum;
      }
    }

    const double di = alpha_[i] - old_i;
    const double dj = alpha_[j] - old_j;
    const double si = sign_[i], sj = sign_[j];
    for (std::size_t k = 0; k < l_; ++k) {
      const std::size_t base = k < n_ ? k : k - n_;
      grad_[k] += sign_[k] * (si * krow_i[base] * di + sj * krow_j[base] * dj);
    }
  }

  std::size_t n_;
  std::size_t l_;
  double c_;
  KernelRowCache cache_;
  std::vector<double> alpha_, grad_, sign_, diag_, lin_;
  std::size_t iterations_ = 0;
  double residual_ = kInf;
};

}  // namespace

double PolyKernel::operator()(std::span<const double> u, std::span<const double> v) const {
  double dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
  return int_pow(gamma * dot + coef0, degree);
}

double SvrModel::predict(std::span<const double> x) const {
  double acc = bias;
  for (std::size_t s = 0; s < coefficients.size(); ++s) {
    acc += coefficients[s] * kernel(support_vectors.row(s), x);
  }
  return acc;
}

SvrFit fit_svr(const Matrix& x, std::span<const double> y, const SvrParams& params) {
  const auto started = std::chrono::steady_clock::now();
  if (x.rows() < 2) throw Error(ErrorCode::EmptyInput, "SVR needs at least two samples");
  if (y.size() != x.rows()) throw Error(ErrorCode::LengthMismatch, "X and y lengths differ");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite target value");
  }
  if (!(params.C > 0.0) || !(params.epsilon >= 0.0) || params.kernel.degree < 1) {
    throw Error(ErrorCode::InvalidConfig, "SVR needs C > 0, epsilon >= 0, degree >= 1");
  }

  SmoSolver solver(x, y, params);
  const bool converged = solver.solve(params.tol, params.max_iterations);
  if (!converged) {
    std::ostringstream msg;
    msg << "SMO stopped after " << solver.iterations()
        << " iterations with KKT residual " << solver.kkt_residual() << " (tol "
        << params.tol << ")";
    throw Error(ErrorCode::NoConvergence, msg.str());
  }

  SvrFit fit;
  fit.dual_coefficients = solver.coefficients();
  fit.dual_objective = -solver.primal_value();

  SvrModel& m = fit.model;
  m.kernel = params.kernel;
  m.C = params.C;
  m.epsilon = params.epsilon;
  m.bias = solver.bias();
  std::size_t support = 0;
  for (double b : fit.dual_coefficients) support += (b != 0.0);
  m.support_vectors = Matrix(support, x.cols());
  std::size_t s = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (fit.dual_coefficients[i] == 0.0) continue;
    std::copy(x.row(i).begin(), x.row(i).end(), m.support_vectors.row(s).begin());
    m.coefficients.push_back(fit.dual_coefficients[i]);
    ++s;
  }

  TrainingReport& r = fit.report;
  r.converged = true;
  r.epochs = solver.iterations();
  r.kkt_residual = solver.kkt_residual();
  const auto fitted = solver.kernel_sums(y, params.epsilon);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    loss += std::max(0.0, std::abs(y[i] - (fitted[i] + m.bias)) - m.epsilon);
  }
  r.train_loss = loss / static_cast<double>(x.rows());
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return fit;
}

}  // namespace liftload

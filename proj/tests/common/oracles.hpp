#pragma once

// Independent reference computations shared by the unit and acceptance
// tests. None of them call into the library's numerical code.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "liftload/core.hpp"
#include "liftload/svr.hpp"

namespace oracle {

using liftload::Matrix;

// Digital Butterworth magnitude after the bilinear map with prewarping:
// |H|^2 = 1 / (1 + (tan(pi f / fs) / tan(pi fc / fs))^4).
inline double butterworth_magnitude_db(double f, double fc, double fs) {
  const double ratio = std::tan(std::numbers::pi * f / fs) / std::tan(std::numbers::pi * fc / fs);
  return -10.0 * std::log10(1.0 + std::pow(ratio, 4));
}

// (1/2n)|y - Xw - b|^2 + alpha (rho |w|_1 + (1 - rho)/2 |w|^2)
inline double enet_objective(const Matrix& x, const std::vector<double>& y, const double* w, double b,
                             double alpha, double rho) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double r = y[i] - b;
    for (std::size_t j = 0; j < x.cols(); ++j) r -= x(i, j) * w[j];
    loss += r * r;
  }
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    l1 += std::abs(w[j]);
    l2 += w[j] * w[j];
  }
  return loss / (2.0 * static_cast<double>(x.rows())) + alpha * (rho * l1 + 0.5 * (1.0 - rho) * l2);
}

// Coarse-to-fine grid minimisation over (w0, w1, b) for two features.
inline std::array<double, 3> enet_grid_minimum(const Matrix& x, const std::vector<double>& y, double alpha,
                                               double rho) {
  std::array<double, 3> center{0.0, 0.0, 0.0};
  double half = 20.0;
  constexpr int kSteps = 20;
  while (half > 1e-7) {
    double best = std::numeric_limits<double>::infinity();
    std::array<double, 3> arg = center;
    for (int a = 0; a <= kSteps; ++a) {
      for (int c = 0; c <= kSteps; ++c) {
        for (int d = 0; d <= kSteps; ++d) {
          const double w[2] = {center[0] - half + 2 * half * a / kSteps,
                               center[1] - half + 2 * half * c / kSteps};
          const double b = center[2] - half + 2 * half * d / kSteps;
          const double f = enet_objective(x, y, w, b, alpha, rho);
          if (f < best) {
            best = f;
            arg = {w[0], w[1], b};
          }
        }
      }
    }
    center = arg;
    half *= 0.5;
  }
  return center;
}

inline double poly_kernel(const liftload::PolyKernel& k, std::span<const double> u, std::span<const double> v) {
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
  return std::pow(k.gamma * dot + k.coef0, k.degree);
}

// max -1/2 b'Kb - eps |b|_1 + y'b  s.t. sum b = 0, |b_i| <= C
inline double svr_dual(const Matrix& x, const std::vector<double>& y, const liftload::PolyKernel& k, double eps,
                       const std::vector<double>& beta) {
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    for (std::size_t j = 0; j < beta.size(); ++j) quad += beta[i] * beta[j] * poly_kernel(k, x.row(i), x.row(j));
    lin += -eps * std::abs(beta[i]) + y[i] * beta[i];
  }
  return -0.5 * quad + lin;
}

// Coarse-to-fine box grid over the first n-1 coefficients; the last one
// closes the equality constraint.
inline double svr_grid_maximum(const Matrix& x, const std::vector<double>& y, const liftload::PolyKernel& k,
                               double eps, double C) {
  const std::size_t n = y.size();
  const std::size_t free = n - 1;
  constexpr int kSteps = 8;
  std::vector<double> center(free, 0.0);
  double half = C;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> beta(n), best_free = center;
  while (half > 1e-7) {
    std::vector<int> idx(free, 0);
    bool done = false;
    while (!done) {
      double sum = 0.0;
      for (std::size_t i = 0; i < free; ++i) {
        beta[i] = std::clamp(center[i] - half + 2.0 * half * idx[i] / kSteps, -C, C);
        sum += beta[i];
      }
      beta[free] = -sum;
      if (std::abs(beta[free]) <= C) {
        const double d = svr_dual(x, y, k, eps, beta);
        if (d > best) {
          best = d;
          best_free.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(free));
        }
      }
      std::size_t pos = 0;
      while (pos < free && ++idx[pos] > kSteps) idx[pos++] = 0;
      done = pos == free;
    }
    center = best_free;
    half *= 0.6;
  }
  return best;
}

// Two-sided Mann-Whitney permutation p-value by enumerating every way to
// pick the first sample's positions out of the pooled values (ties keep
// midranks). Returns (U of the first sample, p).
inline std::pair<double, double> mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), n1 = a.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      less += pooled[j] < pooled[i];
      equal += pooled[j] == pooled[i];
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  auto u_of = [&](const std::vector<bool>& pick) {
    double r = 0;
    for (std::size_t i = 0; i < n; ++i) r += pick[i] ? rank[i] : 0.0;
    return r - static_cast<double>(n1 * (n1 + 1)) / 2.0;
  };
  std::vector<bool> observed(n, false);
  std::fill(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(n1), true);
  const double u = u_of(observed);
  const double mu = static_cast<double>(n1 * (n - n1)) / 2.0;
  std::vector<bool> pick(n, false);
  std::fill(pick.end() - static_cast<std::ptrdiff_t>(n1), pick.end(), true);
  std::size_t total = 0, extreme = 0;
  do {
    ++total;
    extreme += std::abs(u_of(pick) - mu) >= std::abs(u - mu) - 1e-9;
  } while (std::next_permutation(pick.begin(), pick.end()));
  return {u, static_cast<double>(extreme) / static_cast<double>(total)};
}

// Sort, compute both interpolated quantiles by hand, average what lies
// between them (inclusive); midpoint of the band when nothing does.
inline double trimmed_mean(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto k = static_cast<std::size_t>(std::floor(pos));
    if (k + 1 >= v.size()) return v.back();
    return v[k] + (pos - static_cast<double>(k)) * (v[k + 1] - v[k]);
  };
  const double a = q(lo), b = q(hi);
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (x >= a && x <= b) {
      sum += x;
      ++n;
    }
  }
  return n == 0 ? 0.5 * (a + b) : sum / static_cast<double>(n);
}

}  // namespace oracle

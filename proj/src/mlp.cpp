#include "liftload/mlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace liftload {

namespace {

struct LayerTrace {
  Matrix input;     // activations entering the dense layer
  Matrix xhat;      // normalised pre-activations (batch-norm layers)
  std::vector<double> inv_std;
  Matrix pre_relu;  // after batch norm (or the dense output)
  Matrix mask;      // dropout multipliers, empty when dropout is off
};

struct ForwardTrace {
  std::vector<LayerTrace> hidden;
  Matrix last_hidden;
  std::vector<double> output;
};

Matrix dense_forward(const Matrix& in, const DenseLayer& layer) {
  Matrix out(in.rows(), layer.out);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    auto z = out.row(r);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weight.data() + o * layer.in;
      double acc = layer.bias[o];
      for (std::size_t k = 0; k < layer.in; ++k) acc += w[k] * x[k];
      z[o] = acc;
    }
  }
  return out;
}

// `rng` non-null enables dropout; `update_running` refreshes batch-norm
// running statistics (training only).
ForwardTrace forward(MlpModel& model, const Matrix& x, ForwardMode mode, std::mt19937_64* rng,
                     bool update_running, double momentum) {
  ForwardTrace trace;
  const std::size_t batch = x.rows();
  const std::size_t hidden_count = model.layers.size() - 1;
  Matrix a = x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 - model.dropout;

  for (std::size_t l = 0; l < hidden_count; ++l) {
    LayerTrace t;
    t.input = a;
    Matrix h = dense_forward(a, model.layers[l]);
    const std::size_t width = model.layers[l].out;
    if (l < model.norms.size()) {
      auto& bn = model.norms[l];
      t.xhat = Matrix(batch, width);
      t.inv_std.assign(width, 0.0);
      for (std::size_t j = 0; j < width; ++j) {
        double mean = 0.0, var = 0.0;
        if (mode == ForwardMode::BatchStatsNoDropout) {
          for (std::size_t r = 0; r < batch; ++r) mean += h(r, j);
          mean /= static_cast<double>(batch);
          for (std::size_t r = 0; r < batch; ++r) var += (h(r, j) - mean) * (h(r, j) - mean);
          var /= static_cast<double>(batch);
          if (update_running) {
            const double unbiased =
                batch > 1 ? var * static_cast<double>(batch) / static_cast<double>(batch - 1) : var;
            bn.running_mean[j] = (1.0 - momentum) * bn.running_mean[j] + momentum * mean;
            bn.running_var[j] = (1.0 - momentum) * bn.running_var[j] + momentum * unbiased;
          }
        } else {
          mean = bn.running_mean[j];
          var = bn.running_var[j];
        }
        const double inv_std = 1.0 / std::sqrt(var + bn.eps);
        t.inv_std[j] = inv_std;
        for (std::size_t r = 0; r < batch; ++r) {
          const double xn = (h(r, j) - mean) * inv_std;
          t.xhat(r, j) = xn;
          h(r, j) = bn.scale[j] * xn + bn.shift[j];
        }
      }
    }
    t.pre_relu = h;
    for (auto& v : h.data()) v = v > 0.0 ? v : 0.0;
    if (rng != nullptr && model.dropout > 0.0) {
      t.mask = Matrix(batch, width);
      for (std::size_t i = 0; i < h.data().size(); ++i) {
        const double m = unit(*rng) < keep ? 1.0 / keep : 0.0;
        t.mask.data()[i] = m;
        h.data()[i] *= m;
      }
    }
    a = std::move(h);
    trace.hidden.push_back(std::move(t));
  }

  const Matrix out = dense_forward(a, model.layers.back());
  trace.output.assign(out.data().begin(), out.data().end());
  trace.last_hidden = std::move(a);
  return trace;
}

// Gradient offsets in the flat parameter layout.
struct Layout {
  std::vector<std::size_t> weight, bias, scale, shift;
};

Layout layout_of(const MlpModel& m) {
  Layout lay;
  std::size_t off = 0;
  for (const auto& l : m.layers) {
    lay.weight.push_back(off);
    off += l.weight.size();
    lay.bias.push_back(off);
    off += l.bias.size();
  }
  for (const auto& bn : m.norms) {
    lay.scale.push_back(off);
    off += bn.scale.size();
    lay.shift.push_back(off);
    off += bn.shift.size();
  }
  return lay;
}

// Back-propagates d(mean squared error) through a recorded forward pass.
std::vector<double> backward(const MlpModel& model, const ForwardTrace& trace,
                             std::span<const double> y, ForwardMode mode) {
  const std::size_t batch = y.size();
  const Layout lay = layout_of(model);
  std::vector<double> grad(model.parameter_count(), 0.0);

  // Output layer.
  const auto& out_layer = model.layers.back();
  const std::size_t out_idx = model.layers.size() - 1;
  Matrix da(batch, out_layer.in);
  for (std::size_t r = 0; r < batch; ++r) {
    const double g = 2.0 * (trace.output[r] - y[r]) / static_cast<double>(batch);
    grad[lay.bias[out_idx]] += g;
    const auto a = trace.last_hidden.row(r);
    for (std::size_t k = 0; k < out_layer.in; ++k) {
      grad[lay.weight[out_idx] + k] += g * a[k];
      da(r, k) = g * out_layer.weight[k];
    }
  }

  for (std::size_t l = trace.hidden.size(); l-- > 0;) {
    const auto& t = trace.hidden[l];
    const auto& layer = model.layers[l];
    const std::size_t width = layer.out;
    Matrix dz(batch, width);
    for (std::size_t i = 0; i < dz.data().size(); ++i) {
      double g = da.data()[i];
      if (!t.mask.data().empty()) g *= t.mask.data()[i];
      dz.data()[i] = t.pre_relu.data()[i] > 0.0 ? g : 0.0;
    }
    if (l < model.norms.size()) {
      const auto& bn = model.norms[l];
      for (std::size_t j = 0; j < width; ++j) {
        double sum_dh = 0.0, sum_dh_xhat = 0.0;
        for (std::size_t r = 0; r < batch; ++r) {
          sum_dh += dz(r, j);
          sum_dh_xhat += dz(r, j) * t.xhat(r, j);
        }
        grad[lay.scale[l] + j] += sum_dh_xhat;
        grad[lay.shift[l] + j] += sum_dh;
        const double gamma = bn.scale[j];
        if (mode == ForwardMode::BatchStatsNoDropout) {
          // dxhat = dh * gamma; dz = inv_std/B (B dxhat - sum dxhat - xhat sum dxhat xhat)
          const double b = static_cast<double>(batch);
          for (std::size_t r = 0; r < batch; ++r) {
            const double dxhat = dz(r, j) * gamma;
            dz(r, j) = t.inv_std[j] / b *
                       (b * dxhat - gamma * sum_dh - t.xhat(r, j) * gamma * sum_dh_xhat);
          }
        } else {
          for (std::size_t r = 0; r < batch; ++r) dz(r, j) *= gamma * t.inv_std[j];
        }
      }
    }
    Matrix da_prev(batch, layer.in);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto a = t.input.row(r);
      for (std::size_t o = 0; o < width; ++o) {
        const double g = dz(r, o);
        if (g == 0.0) continue;
        grad[lay.bias[l] + o] += g;
        double* gw = grad.data() + lay.weight[l] + o * layer.in;
        const double* w = layer.weight.data() + o * layer.in;
        for (std::size_t k = 0; k < layer.in; ++k) {
          gw[k] += g * a[k];
          da_prev(r, k) += g * w[k];
        }
      }
    }
    da = std::move(da_prev);
  }
  return grad;
}

double mse(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return s / static_cast<double>(y.size());
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(x.row(idx[r]).begin(), x.row(idx[r]).end(), out.row(r).begin());
  }
  return out;
}

// Order of samples independent of how the caller arranged them.
std::vector<std::size_t> canonical_order(const Matrix& x, std::span<const double> y) {
  std::vector<std::size_t> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] < y[b];
    const auto ra = x.row(a), rb = x.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return idx;
}

void check_inputs(const Matrix& x, std::span<const double> y) {
  if (x.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "X and y lengths differ");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite target value");
  }
}

}  // namespace

MlpModel MlpModel::initialise(std::size_t inputs, const MlpParams& params, std::uint64_t seed) {
  MlpModel m;
  m.dropout = params.dropout;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> sizes{inputs};
  sizes.insert(sizes.end(), params.hidden.begin(), params.hidden.end());
  sizes.push_back(1);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    layer.in = sizes[l];
    layer.out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weight.resize(layer.in * layer.out);
    for (auto& w : layer.weight) w = dist(rng);
    layer.bias.assign(layer.out, 0.0);
    m.layers.push_back(std::move(layer));
  }
  const std::size_t norms = std::min(params.batchnorm_layers, params.hidden.size());
  for (std::size_t l = 0; l < norms; ++l) {
    BatchNormLayer bn;
    const std::size_t w = params.hidden[l];
    bn.scale.assign(w, 1.0);
    bn.shift.assign(w, 0.0);
    bn.running_mean.assign(w, 0.0);
    bn.running_var.assign(w, 1.0);
    bn.eps = params.bn_eps;
    m.norms.push_back(std::move(bn));
  }
  return m;
}

double MlpModel::predict(std::span<const double> x) const {
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    std::vector<double> z(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weight.data() + o * layer.in;
      double acc = layer.bias[o];
      for (std::size_t k = 0; k < layer.in; ++k) acc += w[k] * a[k];
      z[o] = acc;
    }
    if (l + 1 == layers.size()) return z[0];
    if (l < norms.size()) {
      const auto& bn = norms[l];
      for (std::size_t j = 0; j < layer.out; ++j) {
        const double inv_std = 1.0 / std::sqrt(bn.running_var[j] + bn.eps);
        z[j] = bn.scale[j] * ((z[j] - bn.running_mean[j]) * inv_std) + bn.shift[j];
      }
    }
    for (auto& v : z) v = v > 0.0 ? v : 0.0;
    a = std::move(z);
  }
  return a.empty() ? 0.0 : a[0];
}

std::vector<double> MlpModel::predict(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(x.row(r));
  return out;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  for (const auto& bn : norms) n += bn.scale.size() + bn.shift.size();
  return n;
}

std::vector<double> MlpModel::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.begin(), l.weight.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  for (const auto& bn : norms) {
    flat.insert(flat.end(), bn.scale.begin(), bn.scale.end());
    flat.insert(flat.end(), bn.shift.begin(), bn.shift.end());
  }
  return flat;
}

void MlpModel::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw Error(ErrorCode::LengthMismatch, "parameter vector has the wrong length");
  }
  auto it = flat.begin();
  auto take = [&](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  for (auto& l : layers) {
    take(l.weight);
    take(l.bias);
  }
  for (auto& bn : norms) {
    take(bn.scale);
    take(bn.shift);
  }
}

LossAndGradient mlp_loss_and_gradient(const MlpModel& model, const Matrix& x,
                                      std::span<const double> y, ForwardMode mode) {
  check_inputs(x, y);
  MlpModel scratch = model;
  const auto trace = forward(scratch, x, mode, nullptr, false, 0.0);
  LossAndGradient out;
  out.loss = mse(trace.output, y);
  out.gradient = backward(scratch, trace, y, mode);
  return out;
}

MlpFit fit_mlp(const Matrix& x, std::span<const double> y, const Matrix& x_val,
               std::span<const double> y_val, const MlpParams& params) {
  const auto started = std::chrono::steady_clock::now();
  check_inputs(x, y);
  check_inputs(x_val, y_val);
  if (params.batch_size < 2 || x.rows() < params.batch_size) {
    throw Error(ErrorCode::InvalidConfig, "MLP training needs at least batch_size (>= 2) samples");
  }
  if (x_val.rows() == 0) throw Error(ErrorCode::EmptyInput, "empty validation set");
  if (!(params.dropout >= 0.0 && params.dropout < 1.0) || !(params.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "dropout must be in [0, 1) and learning rate > 0");
  }

  std::mt19937_64 rng(params.seed);
  MlpModel model = MlpModel::initialise(x.cols(), params, rng());
  model.layers.back().bias[0] = std::accumulate(y.begin(), y.end(), 0.0) /
                                static_cast<double>(y.size());

  std::vector<std::size_t> order = canonical_order(x, y);
  const std::size_t n_params = model.parameter_count();
  std::vector<double> m1(n_params, 0.0), m2(n_params, 0.0);
  std::uint64_t step = 0;

  MlpModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  TrainingReport report;
  std::size_t epoch = 0;

  for (; epoch < params.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
      const std::size_t end = std::min(order.size(), start + params.batch_size);
      if (end - start < 2) break;
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix xb = gather_rows(x, idx);
      std::vector<double> yb(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) yb[r] = y[idx[r]];

      const auto trace = forward(model, xb, ForwardMode::BatchStatsNoDropout, &rng, true,
                                 params.bn_momentum);
      const double loss = mse(trace.output, yb);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training loss became non-finite in epoch " << epoch;
        throw Error(ErrorCode::NonFiniteLoss, msg.str());
      }
      const auto grad = backward(model, trace, yb, ForwardMode::BatchStatsNoDropout);

      ++step;
      const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(step));
      auto p = model.parameters();
      for (std::size_t k = 0; k < n_params; ++k) {
        p[k] -= params.learning_rate * params.weight_decay * p[k];
        m1[k] = params.beta1 * m1[k] + (1.0 - params.beta1) * grad[k];
        m2[k] = params.beta2 * m2[k] + (1.0 - params.beta2) * grad[k] * grad[k];
        const double mhat = m1[k] / bc1;
        const double vhat = m2[k] / bc2;
        p[k] -= params.learning_rate * mhat / (std::sqrt(vhat) + params.adam_eps);
      }
      model.set_parameters(p);
    }

    const double val = mse(model.predict(x_val), y_val);
    if (!std::isfinite(val)) {
      throw Error(ErrorCode::NonFiniteLoss,
                  "validation loss became non-finite in epoch " + std::to_string(epoch));
    }
    report.trace.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = model;
      since_best = 0;
    } else if (++since_best >= params.patience) {
      report.converged = true;
      ++epoch;
      break;
    }
  }

  MlpFit fit;
  fit.model = std::move(best);
  report.epochs = epoch;
  report.val_loss = best_val;
  report.train_loss = mse(fit.model.predict(x), y);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  fit.report = std::move(report);
  return fit;
}

MlpFit fit_mlp(const Matrix& x, std::span<const double> y, const MlpParams& params) {
  check_inputs(x, y);
  auto order = canonical_order(x, y);
  std::mt19937_64 rng(params.seed ^ 0x5eedULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(
      std::llround(params.val_fraction * static_cast<double>(order.size())));
  if (n_val == 0 || n_val >= order.size()) {
    throw Error(ErrorCode::InvalidConfig, "validation fraction leaves an empty partition");
  }
  const std::span<const std::size_t> val_idx(order.data(), n_val);
  const std::span<const std::size_t> train_idx(order.data() + n_val, order.size() - n_val);
  std::vector<double> y_train, y_val;
  for (auto i : train_idx) y_train.push_back(y[i]);
  for (auto i : val_idx) y_val.push_back(y[i]);
  return fit_mlp(gather_rows(x, train_idx), y_train, gather_rows(x, val_idx), y_val, params);
}

}  // namespace liftload

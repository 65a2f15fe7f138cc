#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "liftload/core.hpp"
#include "liftload/training_report.hpp"

namespace liftload {

struct MlpParams {
  std::vector<std::size_t> hidden{32, 16, 8};
  std::size_t batchnorm_layers = 2;  // batch norm after the first N hidden layers
  double dropout = 0.3;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  double val_fraction = 0.2;  // used only when no validation set is passed
  std::uint64_t seed = 7;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
};

struct BatchNormLayer {
  std::vector<double> scale;
  std::vector<double> shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
};

// Dense -> [BatchNorm] -> ReLU -> Dropout for every hidden layer, then a
// linear output unit. Inference uses running statistics and no dropout.
struct MlpModel {
  std::vector<DenseLayer> layers;     // hidden layers followed by the output layer
  std::vector<BatchNormLayer> norms;  // one per leading hidden layer
  double dropout = 0.3;

  static MlpModel initialise(std::size_t inputs, const MlpParams& params, std::uint64_t seed);

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& x) const;

  // Trainable parameters (weights, biases, batch-norm scale/shift) in a
  // fixed order.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  std::size_t parameter_count() const;
};

enum class ForwardMode {
  Inference,          // running batch-norm statistics, no dropout
  BatchStatsNoDropout,  // batch statistics, no dropout
};

struct LossAndGradient {
  double loss = 0.0;              // mean squared error
  std::vector<double> gradient;   // same layout as MlpModel::parameters()
};

LossAndGradient mlp_loss_and_gradient(const MlpModel& model, const Matrix& x,
                                      std::span<const double> y, ForwardMode mode);

struct MlpFit {
  MlpModel model;
  TrainingReport report;
};

// AdamW on MSE with early stopping on validation MSE; returns the
// best-validation snapshot. Throws NonFiniteLoss with the epoch index.
MlpFit fit_mlp(const Matrix& x, std::span<const double> y, const Matrix& x_val,
               std::span<const double> y_val, const MlpParams& params = {});

// Splits off `params.val_fraction` of the data as the validation set.
MlpFit fit_mlp(const Matrix& x, std::span<const double> y, const MlpParams& params = {});

}  // namespace liftload

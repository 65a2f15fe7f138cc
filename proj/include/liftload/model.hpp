#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "liftload/config.hpp"
#include "liftload/elastic_net.hpp"
#include "liftload/mlp.hpp"
#include "liftload/svr.hpp"

namespace liftload {

enum class ModelKind { ElasticNet, Svr, Mlp };

std::string_view to_string(ModelKind kind);  // "enet", "svr", "mlp"
std::optional<ModelKind> model_kind_from_string(std::string_view name);

using Model = std::variant<ElasticNetModel, SvrModel, MlpModel>;

struct TrainedModel {
  Model model;
  TrainingReport report;
};

ModelKind kind_of(const Model& model);
double predict(const Model& model, std::span<const double> x);

// Hyperparameters for all three kinds.
struct ModelParams {
  ElasticNetParams enet;
  SvrParams svr;
  MlpParams mlp;
};

// Reads `enet.*`, `svr.*` and `mlp.*` keys (e.g. `svr.epsilon = 1.3`).
ModelParams model_params_from(const Settings& settings, ModelParams base = {});

// Fits one model kind. The validation set is used for early stopping by
// the MLP and ignored otherwise.
TrainedModel train_model(ModelKind kind, const Matrix& x, std::span<const double> y,
                         const Matrix& x_val, std::span<const double> y_val,
                         const ModelParams& params);

inline constexpr int kModelFormatVersion = 1;

// Versioned JSON envelope {format, kind, version, hyperparams, parameters,
// training_report}; parameter arrays are base64 of little-endian doubles.
std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::string_view text);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace liftload

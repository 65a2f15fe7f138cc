#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "liftload/model.hpp"

namespace liftload {

using nlohmann::json;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ElasticNet: return "enet";
    case ModelKind::Svr: return "svr";
    case ModelKind::Mlp: return "mlp";
  }
  return "unknown";
}

std::optional<ModelKind> model_kind_from_string(std::string_view name) {
  if (name == "enet") return ModelKind::ElasticNet;
  if (name == "svr") return ModelKind::Svr;
  if (name == "mlp") return ModelKind::Mlp;
  return std::nullopt;
}

ModelKind kind_of(const Model& model) {
  return static_cast<ModelKind>(model.index());
}

double predict(const Model& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

ModelParams model_params_from(const Settings& s, ModelParams p) {
  p.enet.alpha = setting_double(s, "enet.alpha", p.enet.alpha);
  p.enet.l1_ratio = setting_double(s, "enet.l1_ratio", p.enet.l1_ratio);
  p.enet.tol = setting_double(s, "enet.tol", p.enet.tol);
  p.enet.max_sweeps = static_cast<std::size_t>(
      setting_int(s, "enet.max_sweeps", static_cast<long long>(p.enet.max_sweeps)));

  p.svr.kernel.degree = static_cast<int>(setting_int(s, "svr.degree", p.svr.kernel.degree));
  p.svr.kernel.gamma = setting_double(s, "svr.gamma", p.svr.kernel.gamma);
  p.svr.kernel.coef0 = setting_double(s, "svr.coef0", p.svr.kernel.coef0);
  p.svr.C = setting_double(s, "svr.C", setting_double(s, "svr.c", p.svr.C));
  p.svr.epsilon = setting_double(s, "svr.epsilon", p.svr.epsilon);
  p.svr.tol = setting_double(s, "svr.tol", p.svr.tol);
  p.svr.max_iterations = static_cast<std::size_t>(
      setting_int(s, "svr.max_iterations", static_cast<long long>(p.svr.max_iterations)));
  p.svr.cache_mb = static_cast<std::size_t>(
      setting_int(s, "svr.cache_mb", static_cast<long long>(p.svr.cache_mb)));

  if (const auto it = s.find("mlp.hidden"); it != s.end()) {
    p.mlp.hidden.clear();
    std::stringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        p.mlp.hidden.push_back(static_cast<std::size_t>(std::stoul(item)));
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "mlp.hidden expects comma-separated sizes");
      }
    }
  }
  p.mlp.batchnorm_layers = static_cast<std::size_t>(
      setting_int(s, "mlp.batchnorm_layers", static_cast<long long>(p.mlp.batchnorm_layers)));
  p.mlp.dropout = setting_double(s, "mlp.dropout", p.mlp.dropout);
  p.mlp.learning_rate =
      setting_double(s, "mlp.lr", setting_double(s, "mlp.learning_rate", p.mlp.learning_rate));
  p.mlp.weight_decay = setting_double(s, "mlp.weight_decay", p.mlp.weight_decay);
  p.mlp.batch_size = static_cast<std::size_t>(
      setting_int(s, "mlp.batch_size", static_cast<long long>(p.mlp.batch_size)));
  p.mlp.max_epochs = static_cast<std::size_t>(
      setting_int(s, "mlp.max_epochs", static_cast<long long>(p.mlp.max_epochs)));
  p.mlp.patience = static_cast<std::size_t>(
      setting_int(s, "mlp.patience", static_cast<long long>(p.mlp.patience)));
  p.mlp.bn_eps = setting_double(s, "mlp.bn_eps", p.mlp.bn_eps);
  p.mlp.bn_momentum = setting_double(s, "mlp.bn_momentum", p.mlp.bn_momentum);
  p.mlp.seed = static_cast<std::uint64_t>(
      setting_int(s, "mlp.seed", static_cast<long long>(p.mlp.seed)));
  return p;
}

TrainedModel train_model(ModelKind kind, const Matrix& x, std::span<const double> y,
                         const Matrix& x_val, std::span<const double> y_val,
                         const ModelParams& params) {
  switch (kind) {
    case ModelKind::ElasticNet: {
      auto fit = fit_elastic_net(x, y, params.enet);
      return {std::move(fit.model), std::move(fit.report)};
    }
    case ModelKind::Svr: {
      auto fit = fit_svr(x, y, params.svr);
      return {std::move(fit.model), std::move(fit.report)};
    }
    case ModelKind::Mlp: {
      auto fit = x_val.rows() > 0 ? fit_mlp(x, y, x_val, y_val, params.mlp)
                                  : fit_mlp(x, y, params.mlp);
      return {std::move(fit.model), std::move(fit.report)};
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown model kind");
}

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::CorruptFile, "bad base64 length");
  std::array<int, 256> lookup{};
  lookup.fill(-1);
  for (std::size_t k = 0; k < kAlphabet.size(); ++k) {
    lookup[static_cast<unsigned char>(kAlphabet[k])] = static_cast<int>(k);
  }
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw Error(ErrorCode::CorruptFile, "bad base64 padding");
        v[k] = lookup[static_cast<unsigned char>(c)];
        if (v[k] < 0) throw Error(ErrorCode::CorruptFile, "bad base64 character");
      }
    }
    const unsigned word = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>((word >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((word >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(word & 0xff));
  }
  return out;
}

json pack(std::span<const double> values, std::vector<std::size_t> shape) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      bytes[i * 8 + b] = static_cast<unsigned char>(bits & 0xff);
      bits >>= 8;
    }
  }
  return json{{"shape", shape}, {"data", base64_encode(bytes)}};
}

std::vector<double> unpack(const json& params, const std::string& name,
                           std::vector<std::size_t> expected_shape = {}) {
  if (!params.contains(name)) throw Error(ErrorCode::CorruptFile, "missing parameter " + name);
  const auto& entry = params.at(name);
  const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
  if (!expected_shape.empty() && shape != expected_shape) {
    throw Error(ErrorCode::CorruptFile, "parameter " + name + " has an unexpected shape");
  }
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  const auto bytes = base64_decode(entry.at("data").get<std::string>());
  if (bytes.size() != count * 8) {
    throw Error(ErrorCode::CorruptFile, "parameter " + name + " is truncated");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[i * 8 + b];
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

json report_to_json(const TrainingReport& r) {
  json j;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss ? json(*r.val_loss) : json(nullptr);
  j["epochs"] = r.epochs;
  j["converged"] = r.converged;
  j["wall_time_s"] = r.wall_time_s;
  j["kkt_residual"] = r.kkt_residual ? json(*r.kkt_residual) : json(nullptr);
  j["trace"] = r.trace;
  return j;
}

TrainingReport report_from_json(const json& j) {
  TrainingReport r;
  r.train_loss = j.at("train_loss").get<double>();
  if (!j.at("val_loss").is_null()) r.val_loss = j.at("val_loss").get<double>();
  r.epochs = j.at("epochs").get<std::size_t>();
  r.converged = j.at("converged").get<bool>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  if (!j.at("kkt_residual").is_null()) r.kkt_residual = j.at("kkt_residual").get<double>();
  r.trace = j.at("trace").get<std::vector<double>>();
  return r;
}

void encode(const ElasticNetModel& m, json& hyper, json& params) {
  hyper["alpha"] = m.alpha;
  hyper["l1_ratio"] = m.l1_ratio;
  hyper["objective"] =
      "(1/2n)|y - Xw - b|^2 + alpha*(l1_ratio*|w|_1 + (1 - l1_ratio)/2*|w|_2^2)";
  params["weights"] = pack(m.weights, {m.weights.size()});
  params["intercept"] = pack(std::span(&m.intercept, 1), {1});
}

void encode(const SvrModel& m, json& hyper, json& params) {
  hyper["kernel"] = "poly";
  hyper["degree"] = m.kernel.degree;
  hyper["gamma"] = m.kernel.gamma;
  hyper["coef0"] = m.kernel.coef0;
  hyper["C"] = m.C;
  hyper["epsilon"] = m.epsilon;
  params["support_vectors"] =
      pack(m.support_vectors.data(), {m.support_vectors.rows(), m.support_vectors.cols()});
  params["coefficients"] = pack(m.coefficients, {m.coefficients.size()});
  params["bias"] = pack(std::span(&m.bias, 1), {1});
}

void encode(const MlpModel& m, json& hyper, json& params) {
  std::vector<std::size_t> sizes;
  for (const auto& l : m.layers) sizes.push_back(l.in);
  if (!m.layers.empty()) sizes.push_back(m.layers.back().out);
  hyper["layer_sizes"] = sizes;
  hyper["batchnorm_layers"] = m.norms.size();
  hyper["dropout"] = m.dropout;
  std::vector<double> eps;
  for (const auto& bn : m.norms) eps.push_back(bn.eps);
  hyper["bn_eps"] = eps;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const auto prefix = "layer" + std::to_string(l);
    params[prefix + ".weight"] = pack(layer.weight, {layer.out, layer.in});
    params[prefix + ".bias"] = pack(layer.bias, {layer.out});
  }
  for (std::size_t l = 0; l < m.norms.size(); ++l) {
    const auto& bn = m.norms[l];
    const auto prefix = "norm" + std::to_string(l);
    params[prefix + ".scale"] = pack(bn.scale, {bn.scale.size()});
    params[prefix + ".shift"] = pack(bn.shift, {bn.shift.size()});
    params[prefix + ".running_mean"] = pack(bn.running_mean, {bn.running_mean.size()});
    params[prefix + ".running_var"] = pack(bn.running_var, {bn.running_var.size()});
  }
}

Model decode(ModelKind kind, const json& hyper, const json& params) {
  switch (kind) {
    case ModelKind::ElasticNet: {
      ElasticNetModel m;
      m.alpha = hyper.at("alpha").get<double>();
      m.l1_ratio = hyper.at("l1_ratio").get<double>();
      m.weights = unpack(params, "weights");
      m.intercept = unpack(params, "intercept", {1})[0];
      return m;
    }
    case ModelKind::Svr: {
      SvrModel m;
      m.kernel.degree = hyper.at("degree").get<int>();
      m.kernel.gamma = hyper.at("gamma").get<double>();
      m.kernel.coef0 = hyper.at("coef0").get<double>();
      m.C = hyper.at("C").get<double>();
      m.epsilon = hyper.at("epsilon").get<double>();
      const auto shape = params.at("support_vectors").at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw Error(ErrorCode::CorruptFile, "support vectors must be 2-D");
      const auto sv = unpack(params, "support_vectors");
      m.support_vectors = Matrix(shape[0], shape[1]);
      std::copy(sv.begin(), sv.end(), m.support_vectors.data().begin());
      m.coefficients = unpack(params, "coefficients", {shape[0]});
      m.bias = unpack(params, "bias", {1})[0];
      return m;
    }
    case ModelKind::Mlp: {
      MlpModel m;
      const auto sizes = hyper.at("layer_sizes").get<std::vector<std::size_t>>();
      const auto norms = hyper.at("batchnorm_layers").get<std::size_t>();
      const auto eps = hyper.at("bn_eps").get<std::vector<double>>();
      if (sizes.size() < 2 || norms > sizes.size() - 2 || eps.size() != norms) {
        throw Error(ErrorCode::CorruptFile, "inconsistent MLP shape");
      }
      m.dropout = hyper.at("dropout").get<double>();
      for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer;
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        const auto prefix = "layer" + std::to_string(l);
        layer.weight = unpack(params, prefix + ".weight", {layer.out, layer.in});
        layer.bias = unpack(params, prefix + ".bias", {layer.out});
        m.layers.push_back(std::move(layer));
      }
      for (std::size_t l = 0; l < norms; ++l) {
        BatchNormLayer bn;
        const std::size_t w = sizes[l + 1];
        const auto prefix = "norm" + std::to_string(l);
        bn.scale = unpack(params, prefix + ".scale", {w});
        bn.shift = unpack(params, prefix + ".shift", {w});
        bn.running_mean = unpack(params, prefix + ".running_mean", {w});
        bn.running_var = unpack(params, prefix + ".running_var", {w});
        bn.eps = eps[l];
        m.norms.push_back(std::move(bn));
      }
      return m;
    }
  }
  throw Error(ErrorCode::CorruptFile, "unknown model kind");
}

}  // namespace

std::string serialize_model(const TrainedModel& model) {
  json hyper = json::object();
  json params = json::object();
  std::visit([&](const auto& m) { encode(m, hyper, params); }, model.model);
  json j;
  j["format"] = "liftload-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = std::string(to_string(kind_of(model.model)));
  j["hyperparams"] = hyper;
  j["parameters"] = params;
  j["training_report"] = report_to_json(model.report);
  return j.dump(2);
}

TrainedModel deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", std::string()) != "liftload-model") {
      throw Error(ErrorCode::CorruptFile, "not a liftload model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorCode::FormatVersionMismatch,
                  "model format version " + std::to_string(version) + ", expected " +
                      std::to_string(kModelFormatVersion));
    }
    const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::CorruptFile, "unknown model kind");
    TrainedModel out;
    out.model = decode(*kind, j.at("hyperparams"), j.at("parameters"));
    out.report = report_from_json(j.at("training_report"));
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write model " + path.string());
  out << serialize_model(model) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

}  // namespace liftload

#include <doctest.h>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "helpers.hpp"
#include "oracles.hpp"
#include "liftload/elastic_net.hpp"
#include "liftload/mlp.hpp"
#include "liftload/model.hpp"
#include "liftload/svr.hpp"

using namespace liftload;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(n, d);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

}  // namespace

// ---------------------------------------------------------------- elastic net

TEST_CASE("elastic net without penalty recovers an exact linear map") {
  std::mt19937_64 rng(1);
  const auto x = random_matrix(50, 3, rng);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = 2.0 * x(i, 0);
  ElasticNetParams p;
  p.alpha = 0.0;
  p.tol = 1e-12;
  const auto fit = fit_elastic_net(x, y, p);
  CHECK(std::abs(fit.model.weights[0] - 2.0) < 1e-8);
  CHECK(std::abs(fit.model.weights[1]) < 1e-8);
  CHECK(std::abs(fit.model.weights[2]) < 1e-8);
  CHECK(std::abs(fit.model.intercept) < 1e-8);
}

TEST_CASE("huge penalty shrinks every weight to zero") {
  std::mt19937_64 rng(2);
  const auto x = random_matrix(40, 4, rng);
  std::vector<double> y(40);
  std::uniform_real_distribution<double> u(2.0, 10.0);
  for (auto& v : y) v = u(rng);
  ElasticNetParams p;
  p.alpha = 1e6;
  const auto fit = fit_elastic_net(x, y, p);
  for (double w : fit.model.weights) CHECK(w == 0.0);
  CHECK(fit.model.intercept == doctest::Approx(std::accumulate(y.begin(), y.end(), 0.0) / 40.0));
  ElasticNetModel m;
  m.weights.assign(4, 0.0);
  m.intercept = 5.0;
  CHECK(m.predict(x.row(3)) == 5.0);
}

TEST_CASE("coordinate descent matches brute-force grid minimisation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int problem = 0; problem < 20; ++problem) {
    const auto x = random_matrix(5, 2, rng);
    std::vector<double> y(5);
    for (auto& v : y) v = u(rng);
    ElasticNetParams p;
    p.alpha = 0.1;
    p.l1_ratio = 0.1;
    p.tol = 1e-12;
    const auto fit = fit_elastic_net(x, y, p);
    const auto grid = oracle::enet_grid_minimum(x, y, 0.1, 0.1);
    CHECK(std::abs(fit.model.weights[0] - grid[0]) < 1e-3);
    CHECK(std::abs(fit.model.weights[1] - grid[1]) < 1e-3);
    CHECK(std::abs(fit.model.intercept - grid[2]) < 1e-3);
    for (std::size_t s = 1; s < fit.report.trace.size(); ++s) {
      CHECK(fit.report.trace[s] <= fit.report.trace[s - 1] + 1e-15);
    }
    CHECK(elastic_net_objective(x, y, fit.model.weights, fit.model.intercept, 0.1, 0.1) ==
          doctest::Approx(oracle::enet_objective(x, y, fit.model.weights.data(), fit.model.intercept, 0.1, 0.1)));
  }
}

TEST_CASE("elastic net stationarity, monotone objective and label shift") {
  std::mt19937_64 rng(4);
  const auto x = random_matrix(200, 8, rng);
  std::vector<double> y(200);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (std::size_t i = 0; i < 200; ++i) y[i] = 1.0 + x(i, 0) - 0.5 * x(i, 3) + 0.05 * x(i, 5) + noise(rng);
  ElasticNetParams p;
  p.tol = 1e-10;
  const auto fit = fit_elastic_net(x, y, p);
  CHECK(fit.report.converged);
  const double alpha = p.alpha, rho = p.l1_ratio;
  const auto& w = fit.model.weights;
  for (std::size_t j = 0; j < 8; ++j) {
    double g = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
      g += x(i, j) * (y[i] - fit.model.predict(x.row(i)));
    }
    g = g / 200.0 - alpha * (1.0 - rho) * w[j];
    if (w[j] != 0.0) CHECK(std::abs(g - alpha * rho * (w[j] > 0 ? 1.0 : -1.0)) < 1e-5);
    else CHECK(std::abs(g) <= alpha * rho + 1e-5);
  }
  for (std::size_t s = 1; s < fit.report.trace.size(); ++s) {
    CHECK(fit.report.trace[s] <= fit.report.trace[s - 1] + 1e-15);
  }
  auto shifted = y;
  for (auto& v : shifted) v += 3.25;
  const auto fit2 = fit_elastic_net(x, shifted, p);
  for (std::size_t i = 0; i < 200; i += 17) {
    CHECK(std::abs(fit2.model.predict(x.row(i)) - fit.model.predict(x.row(i)) - 3.25) < 1e-9);
  }
}

TEST_CASE("elastic net reports running out of sweeps") {
  std::mt19937_64 rng(16);
  auto x = random_matrix(100, 3, rng);
  std::vector<double> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x(i, 1) = x(i, 0) + 1e-3 * x(i, 1);  // nearly collinear columns converge slowly
    y[i] = 3.0 * x(i, 0) + x(i, 2);
  }
  ElasticNetParams p;
  p.alpha = 0.0;
  p.max_sweeps = 3;
  try {
    fit_elastic_net(x, y, p);
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoConvergence);
    CHECK(std::string(e.what()).find("KKT residual") != std::string::npos);
  }
}

TEST_CASE("elastic net rejects non-finite input") {
  Matrix x(3, 2, 1.0);
  x(1, 1) = std::nan("");
  std::vector<double> y{1, 2, 3};
  CHECK_THROWS_AS(fit_elastic_net(x, y), Error);
}

// ------------------------------------------------------------------------ SVR

TEST_CASE("polynomial kernel at zero inner product is coef0 squared") {
  PolyKernel k;
  std::vector<double> u{0.0, 0.0}, v{3.0, 4.0};
  CHECK(k(u, u) == 100.0);
  CHECK(k(u, v) == 100.0);
}

TEST_CASE("constant targets fall inside the tube") {
  std::mt19937_64 rng(5);
  const auto x = random_matrix(30, 36, rng, 0.0, 3000.0);
  std::vector<double> y(30, 4.5);
  const auto fit = fit_svr(x, y);
  CHECK(fit.model.coefficients.empty());
  CHECK(fit.model.support_vectors.rows() == 0);
  for (std::size_t i = 0; i < 30; ++i) CHECK(fit.model.predict(x.row(i)) == doctest::Approx(4.5).epsilon(1e-12));
}

TEST_CASE("SMO dual optimum matches exhaustive box-grid maximisation") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> uy(0.0, 3.0), ue(0.05, 0.3), un(2.0, 6.99);
  for (int problem = 0; problem < 20; ++problem) {
    const auto n = static_cast<std::size_t>(un(rng));
    const auto x = random_matrix(n, 2, rng);
    std::vector<double> y(n);
    for (auto& v : y) v = uy(rng);
    SvrParams p;
    p.kernel = {2, 0.5, 1.0};
    p.C = 1.0;
    p.epsilon = ue(rng);
    p.tol = 1e-6;
    const auto fit = fit_svr(x, y, p);
    const auto& beta = fit.dual_coefficients;
    REQUIRE(beta.size() == n);

    // Dual objective reported by the solver equals the oracle's formula.
    CHECK(fit.dual_objective == doctest::Approx(oracle::svr_dual(x, y, p.kernel, p.epsilon, beta)).epsilon(1e-9));
    const double grid = oracle::svr_grid_maximum(x, y, p.kernel, p.epsilon, p.C);
    CHECK(std::abs(fit.dual_objective - grid) < 1e-3);

    // Feasibility.
    double sum = 0.0;
    for (double b : beta) {
      CHECK(std::abs(b) <= p.C + 1e-12);
      sum += b;
    }
    CHECK(std::abs(sum) < 1e-6);

    // Complementary slackness on the residuals r = y - f(x).
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - fit.model.predict(x.row(i));
      if (std::abs(r) < p.epsilon - 1e-3) CHECK(std::abs(beta[i]) < 1e-12);
      if (std::abs(beta[i]) > 1e-9 && std::abs(beta[i]) < p.C - 1e-9) {
        CHECK(std::abs(std::abs(r) - p.epsilon) < 1e-3);
      }
      if (std::abs(beta[i]) >= p.C - 1e-9) CHECK(std::abs(r) >= p.epsilon - 1e-3);
      // Within the tube unless the coefficient is at the box bound.
      if (std::abs(beta[i]) < p.C - 1e-9) CHECK(std::abs(r) <= p.epsilon + 1e-3);
    }
  }
}

TEST_CASE("SVR model invariants on raw-scale features") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> load(2.0, 10.0), u(0.8, 1.2);
  Matrix x(300, 36);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) {
    y[i] = load(rng);
    for (std::size_t c = 0; c < 36; ++c) x(i, c) = 250.0 * y[i] * u(rng);
  }
  const auto fit = fit_svr(x, y);
  CHECK(fit.report.converged);
  double sum = 0.0;
  for (double b : fit.model.coefficients) {
    CHECK(std::abs(b) <= 1.0 + 1e-12);
    sum += b;
  }
  CHECK(std::abs(sum) < 1e-6);
  const double a = fit.model.predict(x.row(0));
  CHECK(fit.model.predict(x.row(0)) == a);  // bit-identical repeat

  auto shifted = y;
  for (auto& v : shifted) v += 1.0;
  const auto fit2 = fit_svr(x, shifted);
  for (std::size_t i = 0; i < 300; i += 29) {
    CHECK(std::abs(fit2.model.predict(x.row(i)) - fit.model.predict(x.row(i)) - 1.0) < 0.05);
  }
}

TEST_CASE("SVR input errors") {
  Matrix one(1, 2, 1.0);
  std::vector<double> y1{1.0};
  CHECK_THROWS_AS(fit_svr(one, y1), Error);
  Matrix x(3, 2, 1.0);
  x(0, 0) = std::nan("");
  std::vector<double> y{1, 2, 3};
  CHECK_THROWS_AS(fit_svr(x, y), Error);
}

TEST_CASE("SVR reports non-convergence with the KKT residual") {
  std::mt19937_64 rng(8);
  const auto x = random_matrix(60, 3, rng);
  std::vector<double> y(60);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (auto& v : y) v = u(rng);
  SvrParams p;
  p.kernel = {2, 1.0, 1.0};
  p.epsilon = 0.01;
  p.max_iterations = 2;
  try {
    fit_svr(x, y, p);
    FAIL("expected NoConvergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoConvergence);
    CHECK(std::string(e.what()).find("KKT residual") != std::string::npos);
  }
}

// ------------------------------------------------------------------------ MLP

namespace {

MlpModel small_mlp(std::uint64_t seed) {
  MlpParams p;
  p.hidden = {6, 5, 4};
  auto m = MlpModel::initialise(5, p, seed);
  // Non-trivial frozen statistics and affine parameters.
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5), pos(0.5, 2.0);
  for (auto& bn : m.norms) {
    for (auto& v : bn.running_mean) v = u(rng);
    for (auto& v : bn.running_var) v = pos(rng);
    for (auto& v : bn.scale) v = pos(rng);
    for (auto& v : bn.shift) v = u(rng);
  }
  return m;
}

double max_relative_gradient_error(const MlpModel& model, const Matrix& x, const std::vector<double>& y,
                                   ForwardMode mode) {
  const auto analytic = mlp_loss_and_gradient(model, x, y, mode).gradient;
  auto params = model.parameters();
  MlpModel probe = model;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    // A step that straddles a ReLU kink spoils one difference quotient;
    // the better of two step sizes is kept.
    double err = std::numeric_limits<double>::infinity();
    for (double rel : {1e-5, 1e-6}) {
      const double h = rel * std::max(1.0, std::abs(params[k]));
      const double saved = params[k];
      params[k] = saved + h;
      probe.set_parameters(params);
      const double up = mlp_loss_and_gradient(probe, x, y, mode).loss;
      params[k] = saved - h;
      probe.set_parameters(params);
      const double down = mlp_loss_and_gradient(probe, x, y, mode).loss;
      params[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
      err = std::min(err, std::abs(numeric - analytic[k]) / scale);
    }
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("MLP analytic gradient matches central differences") {
  std::mt19937_64 rng(9);
  const auto x = random_matrix(16, 5, rng);
  std::vector<double> y(16);
  std::uniform_real_distribution<double> u(2.0, 10.0);
  for (auto& v : y) v = u(rng);
  const auto model = small_mlp(11);
  CHECK(max_relative_gradient_error(model, x, y, ForwardMode::Inference) < 1e-4);
  CHECK(max_relative_gradient_error(model, x, y, ForwardMode::BatchStatsNoDropout) < 1e-4);
}

TEST_CASE("MLP architecture and deterministic inference") {
  MlpParams p;
  const auto m = MlpModel::initialise(36, p, 1);
  REQUIRE(m.layers.size() == 4);
  CHECK(m.layers[0].in == 36);
  CHECK(m.layers[0].out == 32);
  CHECK(m.layers[1].out == 16);
  CHECK(m.layers[2].out == 8);
  CHECK(m.layers[3].out == 1);
  CHECK(m.norms.size() == 2);
  std::vector<double> x(36, 100.0);
  CHECK(m.predict(x) == m.predict(x));
}

TEST_CASE("MLP fits a noiseless linear target") {
  std::mt19937_64 rng(10);
  const auto x = random_matrix(2000, 4, rng);
  std::vector<double> y(2000);
  for (std::size_t i = 0; i < 2000; ++i) y[i] = 6.0 + 3.0 * x(i, 0);
  MlpParams p;
  p.learning_rate = 1e-2;
  p.dropout = 0.0;
  p.max_epochs = 300;
  p.patience = 40;
  const auto fit = fit_mlp(x, y, p);
  CHECK(fit.report.train_loss < 1e-2);
}

TEST_CASE("MLP learns a constant target") {
  std::mt19937_64 rng(11);
  const auto x = random_matrix(512, 6, rng, 0.0, 1000.0);
  std::vector<double> y(512, 7.0);
  MlpParams p;
  p.learning_rate = 1e-3;
  p.max_epochs = 300;
  p.patience = 300;
  const auto fit = fit_mlp(x, y, p);
  for (std::size_t i = 0; i < 512; i += 31) CHECK(std::abs(fit.model.predict(x.row(i)) - 7.0) < 0.05);
}

TEST_CASE("MLP training ignores the input order") {
  std::mt19937_64 rng(12);
  const auto x = random_matrix(300, 3, rng);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) y[i] = 2.0 + x(i, 1);
  std::vector<std::size_t> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix xp(300, 3);
  std::vector<double> yp(300);
  for (std::size_t i = 0; i < 300; ++i) {
    std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
    yp[i] = y[perm[i]];
  }
  MlpParams p;
  p.max_epochs = 15;
  const auto a = fit_mlp(x, y, p);
  const auto b = fit_mlp(xp, yp, p);
  CHECK(a.model.parameters() == b.model.parameters());
}

TEST_CASE("MLP divergence is reported with its epoch") {
  std::mt19937_64 rng(13);
  const auto x = random_matrix(256, 3, rng, 0.0, 1e6);
  std::vector<double> y(256, 1e300);
  MlpParams p;
  p.max_epochs = 5;
  try {
    fit_mlp(x, y, p);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

// ---------------------------------------------------------------- model files

namespace {

TrainedModel trained(ModelKind kind) {
  std::mt19937_64 rng(14);
  Matrix x(200, 36);
  std::vector<double> y(200);
  std::uniform_real_distribution<double> load(2.0, 10.0), u(0.8, 1.2);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = load(rng);
    for (std::size_t c = 0; c < 36; ++c) x(i, c) = 250.0 * y[i] * u(rng);
  }
  ModelParams p;
  p.mlp.max_epochs = 3;
  return train_model(kind, x, y, x, y, p);
}

}  // namespace

TEST_CASE("every model kind round-trips bit-identically") {
  testutil::TempDir dir;
  std::mt19937_64 rng(15);
  for (auto kind : {ModelKind::ElasticNet, ModelKind::Svr, ModelKind::Mlp}) {
    const auto m = trained(kind);
    const auto path = dir / (std::string(to_string(kind)) + ".json");
    save_model(path, m);
    const auto back = load_model(path);
    CHECK(kind_of(back.model) == kind);
    CHECK(back.report.epochs == m.report.epochs);
    std::uniform_real_distribution<double> u(-500.0, 3000.0);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x(36);
      for (auto& v : x) v = u(rng);
      CHECK(predict(back.model, x) == predict(m.model, x));
    }
  }
}

TEST_CASE("truncated or mis-versioned model files are rejected") {
  const auto text = serialize_model(trained(ModelKind::ElasticNet));
  try {
    deserialize_model(text.substr(0, text.size() / 2));
    FAIL("expected CorruptFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptFile);
  }
  auto j = nlohmann::json::parse(text);
  j["version"] = kModelFormatVersion + 1;
  try {
    deserialize_model(j.dump());
    FAIL("expected FormatVersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FormatVersionMismatch);
  }
  j = nlohmann::json::parse(text);
  j["parameters"]["weights"]["data"] = "!!!";
  CHECK_THROWS_AS(deserialize_model(j.dump()), Error);
}

TEST_CASE("hyperparameters come from settings") {
  const auto p = model_params_from(parse_settings("[svr]\nepsilon = 0.4\nC = 2\n[mlp]\nhidden = 8,4\n"));
  CHECK(p.svr.epsilon == 0.4);
  CHECK(p.svr.C == 2.0);
  CHECK(p.mlp.hidden == std::vector<std::size_t>{8, 4});
  CHECK(p.enet.alpha == 0.1);
  CHECK(model_kind_from_string("svm") == std::nullopt);
}

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace liftload {

struct TrainingReport {
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::size_t epochs = 0;  // sweeps (enet), solver iterations (svr), epochs (mlp)
  bool converged = false;
  double wall_time_s = 0.0;
  std::optional<double> kkt_residual;
  // Objective after every sweep (enet) or validation MSE per epoch (mlp).
  std::vector<double> trace;
};

}  // namespace liftload

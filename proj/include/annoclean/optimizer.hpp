#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "annoclean/layers.hpp"

namespace annoclean {

struct RmsPropConfig {
  double learning_rate = 1e-5;
  double alpha = 0.99;  // smoothing constant of the squared-gradient average
  double eps = 1e-8;
  double momentum = 0.9;
  double weight_decay = 1e-8;
};

struct OptimizerState {
  std::int64_t steps = 0;
  std::map<std::string, std::vector<float>> square_avg;
  std::map<std::string, std::vector<float>> momentum_buffer;
};

/// RMSprop with coupled weight decay and heavy-ball momentum on the scaled gradient:
///   g ← g + λθ;  v ← αv + (1−α)g²;  b ← μb + g / (√v + ε);  θ ← θ − η·b
class RmsProp {
 public:
  explicit RmsProp(RmsPropConfig config) : config_(config) {}

  void step(std::span<Parameter* const> params);

  const RmsPropConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState state) { state_ = std::move(state); }

 private:
  RmsPropConfig config_;
  OptimizerState state_;
};

}  // namespace annoclean

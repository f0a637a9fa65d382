#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace annoclean {

enum class LossTerm { L1, MSE, Huber, SmoothL1 };

struct LossComponent {
  LossTerm term = LossTerm::L1;
  /// Huber delta or SmoothL1 beta; unused otherwise.
  double param = 1.0;
  double weight = 1.0;

  friend bool operator==(const LossComponent&, const LossComponent&) = default;
};

struct LossSpec {
  std::vector<LossComponent> terms;

  /// Accepts "l1", "mse", "huber", "huber(0.5)", "smooth_l1", "smooth_l1(2)", sums joined
  /// with '+', and "all" (L1 + Huber + SmoothL1 + MSE).
  static LossSpec parse(std::string_view text);
  /// Canonical text, e.g. "l1+mse"; parse(name()) round-trips.
  std::string name() const;
  /// True when any term is MSE.
  bool has_mse() const;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

/// Mean-reduced weighted sum of loss terms over all elements.
class LossFunction {
 public:
  explicit LossFunction(LossSpec spec);

  double value(std::span<const float> prediction, std::span<const float> target) const;
  /// Returns the loss and writes d(loss)/d(prediction) into `grad`.
  double value_and_grad(std::span<const float> prediction, std::span<const float> target,
                        std::span<float> grad) const;

  const LossSpec& spec() const { return spec_; }

 private:
  LossSpec spec_;
};

/// Throws ConfigError for an empty term set or non-positive Huber/SmoothL1 parameters.
LossFunction make_loss(const LossSpec& spec);

/// Per-element value and derivative of one term at difference d = prediction − target.
double term_value(const LossComponent& c, double d);
double term_derivative(const LossComponent& c, double d);

}  // namespace annoclean

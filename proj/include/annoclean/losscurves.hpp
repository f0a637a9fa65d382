#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "annoclean/loss.hpp"
#include "annoclean/train.hpp"

namespace annoclean {

struct NamedCurve {
  std::string label;
  LossSpec loss;
  LossCurve curve;
};

struct ConvergenceRow {
  std::string label;
  std::string loss;
  bool mse_family = false;
  std::size_t steps = 0;
  Convergence convergence;
  double final_average = 0.0;  // moving average of the last window
};

std::vector<ConvergenceRow> summarize_convergence(std::span<const NamedCurve> curves,
                                                  std::size_t window = 50, double rel_eps = 0.05);

std::string format_convergence_table(std::span<const ConvergenceRow> rows);
void write_convergence_csv(std::span<const ConvergenceRow> rows, const std::filesystem::path& path);

/// Two side-by-side panels: L1-family losses on the left, MSE-bearing losses on the right.
/// Curves are drawn as `smoothing`-step moving averages.
void plot_loss_curves(std::span<const NamedCurve> curves, const std::filesystem::path& path,
                      std::size_t smoothing = 20);

}  // namespace annoclean

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "annoclean/checkpoint.hpp"
#include "annoclean/error.hpp"
#include "annoclean/datagen.hpp"
#include "annoclean/loss.hpp"
#include "annoclean/model.hpp"
#include "annoclean/optimizer.hpp"

namespace annoclean {

/// N2N regresses noisy_a onto noisy_b; N2C regresses noisy_a onto clean.
enum class Scheme { N2N, N2C };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

/// Constant keeps the base rate; Cosine anneals it to zero over the full run.
enum class LrSchedule { Constant, Cosine };

std::string_view to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(std::string_view name);

/// Learning rate for 0-based `step` out of `total_steps`.
double scheduled_learning_rate(double base, LrSchedule schedule, std::int64_t step,
                               std::int64_t total_steps);

struct TrainConfig {
  Scheme scheme = Scheme::N2N;
  LossSpec loss = LossSpec::parse("l1");
  RmsPropConfig optimizer;
  LrSchedule lr_schedule = LrSchedule::Constant;
  int batch_size = 0;  // mandatory
  int epochs = 0;      // mandatory
  NormalizationMode normalization = NormalizationMode::Linear;
  std::uint64_t seed = 0;
  std::string split = "train";

  /// Throws ConfigError when batch size or epoch count is missing.
  void validate() const;
};

struct LossPoint {
  std::int64_t step = 0;
  double loss = 0.0;
};

struct LossCurve {
  std::vector<LossPoint> steps;
  double wall_clock = 0.0;  // seconds

  std::vector<double> values() const;
};

/// `step,loss` CSV with a header row.
void write_loss_csv(const LossCurve& curve, const std::filesystem::path& path);
LossCurve read_loss_csv(const std::filesystem::path& path);

/// Supplies (input, target) batches by sample index.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::size_t size() const = 0;
  virtual void fill(std::span<const std::size_t> indices, Tensor& input, Tensor& target) = 0;
};

/// Reads one manifest split; the scheme decides whether the target is noisy_b or clean.
/// Decoded images are cached after first use.
class ManifestBatchSource final : public BatchSource {
 public:
  ManifestBatchSource(const DatasetManifest& manifest, const std::string& split, Scheme scheme,
                      NormalizationMode normalization);

  std::size_t size() const override { return record_ids_.size(); }
  void fill(std::span<const std::size_t> indices, Tensor& input, Tensor& target) override;

  const std::string& record_id(std::size_t index) const { return record_ids_.at(index); }

 private:
  struct Cached {
    Image input;
    Image target;
  };

  const DatasetManifest& manifest_;
  std::vector<std::string> record_ids_;
  Scheme scheme_;
  NormalizationMode normalization_;
  std::unordered_map<std::size_t, Cached> cache_;
};

struct TrainOptions {
  /// Writes `epoch_<n>.ckpt` here after every epoch when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Continue from a checkpoint written by an earlier call with the same config.
  std::optional<ResumeState> resume;
  std::optional<OptimizerState> optimizer_state;
  /// Observes every batch after it is assembled (epoch, step, sample indices, input, target).
  std::function<void(int, std::int64_t, std::span<const std::size_t>, const Tensor&,
                     const Tensor&)>
      on_batch;
  std::function<void(int epoch, const LossCurve&)> on_epoch_end;
};

/// Raised when the loss turns NaN/inf; carries the failing step.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::int64_t step, double value);
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Minimizes config.loss over the source with RMSprop, shuffling sample order each epoch
/// from (config.seed, epoch). Records the loss after every step.
/// `save_hook` runs after every epoch with the optimizer and resume state.
using CheckpointHook =
    std::function<void(int epoch, const OptimizerState&, const ResumeState&)>;
LossCurve train_network(Network& network, BatchSource& source, const TrainConfig& config,
                        const TrainOptions& options = {}, const CheckpointHook& save_hook = {});

struct TrainOutcome {
  TrainedModel model;
  LossCurve curve;
};

/// Trains on `config.split` of the manifest and stamps the model's training metadata.
TrainOutcome train(TrainedModel model, const DatasetManifest& manifest, const TrainConfig& config,
                   const TrainOptions& options = {});

struct Convergence {
  std::size_t index = 0;     // window start in the curve
  std::int64_t step = 0;     // global step at that index
  bool degenerate = false;   // loss did not go down, or only the final window qualifies
};

/// First window start whose moving average lies within rel_eps of the final window's moving
/// average.
Convergence convergence_step(const LossCurve& curve, std::size_t window = 50,
                             double rel_eps = 0.05);

}  // namespace annoclean

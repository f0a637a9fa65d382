#include "annoclean/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "annoclean/error.hpp"

namespace annoclean {

namespace fs = std::filesystem;

std::string_view to_string(Scheme scheme) { return scheme == Scheme::N2N ? "n2n" : "n2c"; }

Scheme parse_scheme(std::string_view name) {
  if (name == "n2n" || name == "N2N") {
    return Scheme::N2N;
  }
  if (name == "n2c" || name == "N2C") {
    return Scheme::N2C;
  }
  throw ConfigError("unknown training scheme '" + std::string(name) + "' (expected n2n or n2c)");
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::Constant ? "constant" : "cosine";
}

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "constant") {
    return LrSchedule::Constant;
  }
  if (name == "cosine") {
    return LrSchedule::Cosine;
  }
  throw ConfigError("unknown learning-rate schedule '" + std::string(name) +
                    "' (expected constant or cosine)");
}

double scheduled_learning_rate(double base, LrSchedule schedule, std::int64_t step,
                               std::int64_t total_steps) {
  if (schedule == LrSchedule::Constant || total_steps <= 0) {
    return base;
  }
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void TrainConfig::validate() const {
  if (batch_size < 1) {
    throw ConfigError("train.batch_size is required and must be >= 1");
  }
  if (epochs < 1) {
    throw ConfigError("train.epochs is required and must be >= 1");
  }
  if (!(optimizer.learning_rate > 0.0)) {
    throw ConfigError("learning rate must be positive");
  }
  make_loss(loss);
}

std::vector<double> LossCurve::values() const {
  std::vector<double> v;
  v.reserve(steps.size());
  for (const auto& p : steps) {
    v.push_back(p.loss);
  }
  return v;
}

void write_loss_csv(const LossCurve& curve, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write loss curve: " + path.string());
  }
  out << "step,loss\n";
  out.precision(17);
  for (const auto& p : curve.steps) {
    out << p.step << ',' << p.loss << '\n';
  }
}

LossCurve read_loss_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("loss curve not found: " + path.string());
  }
  LossCurve curve;
  std::string line;
  std::getline(in, line);
  if (line != "step,loss") {
    throw ConfigError("unexpected loss CSV header in " + path.string());
  }
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    LossPoint p;
    char comma = 0;
    if (!(row >> p.step >> comma >> p.loss) || comma != ',') {
      throw ConfigError("malformed loss CSV row '" + line + "' in " + path.string());
    }
    curve.steps.push_back(p);
  }
  return curve;
}

ManifestBatchSource::ManifestBatchSource(const DatasetManifest& manifest, const std::string& split,
                                         Scheme scheme, NormalizationMode normalization)
    : manifest_(manifest),
      record_ids_(manifest.split_records(split)),
      scheme_(scheme),
      normalization_(normalization) {}

void ManifestBatchSource::fill(std::span<const std::size_t> indices, Tensor& input,
                               Tensor& target) {
  std::vector<Image> inputs;
  std::vector<Image> targets;
  for (std::size_t idx : indices) {
    auto it = cache_.find(idx);
    if (it == cache_.end()) {
      SampleTuple t = load_sample(manifest_, record_ids_.at(idx), normalization_);
      it = cache_
               .emplace(idx, Cached{std::move(t.noisy_a),
                                    scheme_ == Scheme::N2N ? std::move(t.noisy_b)
                                                           : std::move(t.clean)})
               .first;
    }
    inputs.push_back(it->second.input);
    targets.push_back(it->second.target);
  }
  input = images_to_batch(inputs);
  target = images_to_batch(targets);
}

NonFiniteLoss::NonFiniteLoss(std::int64_t step, double value)
    : Error("non-finite loss " + std::to_string(value) + " at step " + std::to_string(step)),
      step_(step) {}

LossCurve train_network(Network& network, BatchSource& source, const TrainConfig& config,
                        const TrainOptions& options, const CheckpointHook& save_hook) {
  config.validate();
  if (source.size() == 0) {
    throw ConfigError("training split '" + config.split + "' is empty");
  }
  const LossFunction loss = make_loss(config.loss);
  RmsProp optimizer(config.optimizer);
  if (options.optimizer_state) {
    optimizer.set_state(*options.optimizer_state);
  }

  LossCurve curve;
  int first_epoch = 0;
  std::int64_t step = 0;
  if (options.resume) {
    first_epoch = options.resume->epochs_completed;
    step = options.resume->global_step;
    for (std::size_t i = 0; i < options.resume->curve.size(); ++i) {
      curve.steps.push_back({static_cast<std::int64_t>(i), options.resume->curve[i]});
    }
  }

  const auto params = network.parameters();
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((source.size() + config.batch_size - 1) / config.batch_size);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(source.size());
  Tensor input, target;
  for (int epoch = first_epoch; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      source.fill(batch, input, target);
      if (options.on_batch) {
        options.on_batch(epoch, step, batch, input, target);
      }

      network.zero_grad();
      const Tensor output = network.forward(input, true);
      if (output.shape() != target.shape()) {
        throw ShapeError("network output " + to_string(output.shape()) + " vs target " +
                         to_string(target.shape()));
      }
      Tensor grad(output.shape());
      const double value = loss.value_and_grad(output.data(), target.data(), grad.data());
      if (!std::isfinite(value)) {
        throw NonFiniteLoss(step, value);
      }
      network.backward(grad);
      optimizer.set_learning_rate(scheduled_learning_rate(
          config.optimizer.learning_rate, config.lr_schedule, step, total_steps));
      optimizer.step(params);
      curve.steps.push_back({step, value});
      ++step;
    }

    curve.wall_clock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (save_hook) {
      save_hook(epoch + 1, optimizer.state(), ResumeState{epoch + 1, step, curve.values()});
    }
    if (options.on_epoch_end) {
      options.on_epoch_end(epoch + 1, curve);
    }
  }
  return curve;
}

TrainOutcome train(TrainedModel model, const DatasetManifest& manifest, const TrainConfig& config,
                   const TrainOptions& options) {
  config.validate();
  const int div = model.network->divisor();
  if (manifest.image_dims.height % div != 0 || manifest.image_dims.width % div != 0) {
    throw ConfigError("dataset images " + to_string(manifest.image_dims) +
                      " are not compatible with the model: dims must be divisible by " +
                      std::to_string(div));
  }
  model.meta = TrainingMeta{std::string(to_string(config.scheme)), config.loss.name(),
                            std::string(to_string(config.normalization)), config.epochs,
                            config.seed};
  ManifestBatchSource source(manifest, config.split, config.scheme, config.normalization);

  CheckpointHook hook;
  if (options.checkpoint_dir) {
    fs::create_directories(*options.checkpoint_dir);
    hook = [&](int epoch, const OptimizerState& opt, const ResumeState& resume) {
      save_checkpoint(model, *options.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"),
                      &opt, &resume);
    };
  }
  LossCurve curve = train_network(*model.network, source, config, options, hook);
  return {std::move(model), std::move(curve)};
}

Convergence convergence_step(const LossCurve& curve, std::size_t window, double rel_eps) {
  const std::size_t n = curve.steps.size();
  if (window == 0 || n <= window) {
    throw ConfigError("loss curve of " + std::to_string(n) + " steps is too short for window " +
                      std::to_string(window));
  }
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + curve.steps[i].loss;
  }
  auto moving = [&](std::size_t i) { return (prefix[i + window] - prefix[i]) / window; };
  const std::size_t last = n - window;
  const double final_avg = moving(last);
  Convergence result;
  result.index = last;
  for (std::size_t i = 0; i <= last; ++i) {
    if (std::abs(moving(i) - final_avg) <= rel_eps * std::abs(final_avg)) {
      result.index = i;
      break;
    }
  }
  result.step = curve.steps[result.index].step;
  result.degenerate = result.index == last || final_avg > moving(0);
  return result;
}

}  // namespace annoclean

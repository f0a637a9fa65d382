#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annoclean/layers.hpp"
#include "annoclean/tensor.hpp"

namespace annoclean {

inline constexpr const char* kCustomUNet = "custom_unet";

/// Architecture description. Defaults are the full-size customized U-Net:
/// four resolution levels of 48, 96, 192 and 384 channels.
struct ModelSpec {
  std::string architecture = kCustomUNet;
  int depth = 4;
  int base_channels = 48;
  int channel_multiplier = 2;
  int in_channels = 3;
  int out_channels = 3;
  double leaky_slope = 0.1;

  /// Throws ConfigError on non-positive sizes.
  void validate() const;
  /// Required divisor of input height and width (2^depth).
  int divisor() const { return 1 << depth; }
  /// Channel width of encoder level `level` (0-based).
  int level_channels(int level) const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// A differentiable image-to-image network with named parameters.
class Network {
 public:
  virtual ~Network() = default;

  /// Forward pass; `training` keeps activations for backward.
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  /// Accumulates parameter gradients for the last training forward pass.
  virtual void backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  /// Height/width multiple the network accepts.
  virtual int divisor() const = 0;

  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// Encoder-decoder with stride-2 convolution downsampling, kernel-2 transposed
/// convolution upsampling and skip concatenation; output has the input's spatial size.
class CustomUNet final : public Network {
 public:
  CustomUNet(const ModelSpec& spec, std::uint64_t init_seed);
  ~CustomUNet() override;

  Tensor forward(const Tensor& x, bool training) override;
  void backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override;
  int divisor() const override { return spec_.divisor(); }

 private:
  struct Impl;
  ModelSpec spec_;
  std::unique_ptr<Impl> impl_;
};

/// One learnable scalar broadcast to every output element; a convex reference model.
class GlobalBias final : public Network {
 public:
  explicit GlobalBias(float initial = 0.0f);

  Tensor forward(const Tensor& x, bool training) override;
  void backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&bias_}; }
  int divisor() const override { return 1; }

  float value() const { return bias_.value[0]; }

 private:
  Parameter bias_;
};

using ArchitectureBuilder =
    std::function<std::unique_ptr<Network>(const ModelSpec&, std::uint64_t init_seed)>;

class ArchitectureRegistry {
 public:
  /// Registry pre-populated with "custom_unet".
  static ArchitectureRegistry with_builtins();

  void register_architecture(const std::string& name, ArchitectureBuilder builder);
  /// Throws ConfigError listing the registered names when `name` is unknown.
  const ArchitectureBuilder& lookup(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, ArchitectureBuilder> builders_;
};

ArchitectureRegistry& default_registry();

struct TrainingMeta {
  std::string scheme;
  std::string loss;
  std::string normalization = "linear";
  int epochs = 0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const TrainingMeta& meta);
TrainingMeta training_meta_from_json(const nlohmann::json& j);

struct TrainedModel {
  ModelSpec spec;
  std::unique_ptr<Network> network;
  TrainingMeta meta;
};

TrainedModel build_model(const ModelSpec& spec, std::uint64_t init_seed,
                         const ArchitectureRegistry& registry = default_registry());

enum class PaddingPolicy { Strict, ReflectPad };
enum class ForwardMode { Raw, Inference };

/// Runs the network on an N×C×H×W batch. Strict rejects sizes that are not multiples of the
/// network divisor; ReflectPad pads bottom/right by reflection and crops the result back.
/// Inference mode clamps the output to [0,1].
Tensor forward(TrainedModel& model, const Tensor& batch,
               PaddingPolicy policy = PaddingPolicy::ReflectPad,
               ForwardMode mode = ForwardMode::Inference);

/// Reflection padding (edge pixel not repeated) to `height` × `width`.
Tensor reflect_pad(const Tensor& x, int height, int width);
Tensor crop(const Tensor& x, int height, int width);

}  // namespace annoclean

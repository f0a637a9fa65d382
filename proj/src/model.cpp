#include "annoclean/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "annoclean/error.hpp"

namespace annoclean {

using nlohmann::json;

void ModelSpec::validate() const {
  if (depth < 1 || depth > 8) {
    throw ConfigError("model depth must be in [1, 8], got " + std::to_string(depth));
  }
  if (base_channels < 1 || channel_multiplier < 1 || in_channels < 1 || out_channels < 1) {
    throw ConfigError("model channel counts must be positive");
  }
  if (!(leaky_slope >= 0.0)) {
    throw ConfigError("leaky slope must be non-negative");
  }
}

int ModelSpec::level_channels(int level) const {
  int c = base_channels;
  for (int i = 0; i < std::min(level, depth - 1); ++i) {
    c *= channel_multiplier;
  }
  return c;
}

json to_json(const ModelSpec& s) {
  return json{{"architecture", s.architecture},   {"depth", s.depth},
              {"base_channels", s.base_channels}, {"channel_multiplier", s.channel_multiplier},
              {"in_channels", s.in_channels},     {"out_channels", s.out_channels},
              {"leaky_slope", s.leaky_slope}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  s.architecture = j.value("architecture", s.architecture);
  s.depth = j.value("depth", s.depth);
  s.base_channels = j.value("base_channels", s.base_channels);
  s.channel_multiplier = j.value("channel_multiplier", s.channel_multiplier);
  s.in_channels = j.value("in_channels", s.in_channels);
  s.out_channels = j.value("out_channels", s.out_channels);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  return s;
}

json to_json(const TrainingMeta& m) {
  return json{{"scheme", m.scheme},
              {"loss", m.loss},
              {"normalization", m.normalization},
              {"epochs", m.epochs},
              {"seed", m.seed}};
}

TrainingMeta training_meta_from_json(const json& j) {
  TrainingMeta m;
  m.scheme = j.value("scheme", "");
  m.loss = j.value("loss", "");
  m.normalization = j.value("normalization", "linear");
  m.epochs = j.value("epochs", 0);
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

std::vector<const Parameter*> Network::parameters() const {
  auto params = const_cast<Network*>(this)->parameters();
  return {params.begin(), params.end()};
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) {
    n += p->size();
  }
  return n;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) {
    std::fill(p->grad.begin(), p->grad.end(), 0.0f);
  }
}

// ---------------------------------------------------------------------------

struct CustomUNet::Impl {
  struct Encoder {
    Conv2d conv1, conv2, down;
    LeakyRelu act1, act2, act_down;
  };
  struct Decoder {
    ConvTranspose2x2 up;
    Conv2d conv1, conv2;
    LeakyRelu act_up, act1, act2;
  };

  std::vector<Encoder> encoders;
  Conv2d mid1, mid2;
  LeakyRelu act_mid1, act_mid2;
  std::vector<Decoder> decoders;  // decoders[k] mirrors encoders[k]
  Conv2d head;

  Impl(const ModelSpec& s)
      : mid1("bottleneck.conv1", s.level_channels(s.depth), s.level_channels(s.depth), 3, 1, 1),
        mid2("bottleneck.conv2", s.level_channels(s.depth), s.level_channels(s.depth), 3, 1, 1),
        act_mid1(static_cast<float>(s.leaky_slope)),
        act_mid2(static_cast<float>(s.leaky_slope)),
        head("head", s.base_channels, s.out_channels, 1, 1, 0) {
    const auto slope = static_cast<float>(s.leaky_slope);
    for (int k = 0; k < s.depth; ++k) {
      const std::string p = "enc" + std::to_string(k);
      const int in = k == 0 ? s.in_channels : s.level_channels(k);
      const int ch = s.level_channels(k);
      encoders.push_back({Conv2d(p + ".conv1", in, ch, 3, 1, 1), Conv2d(p + ".conv2", ch, ch, 3, 1, 1),
                          Conv2d(p + ".down", ch, s.level_channels(k + 1), 3, 2, 1),
                          LeakyRelu(slope), LeakyRelu(slope), LeakyRelu(slope)});
    }
    for (int k = 0; k < s.depth; ++k) {
      const std::string p = "dec" + std::to_string(k);
      const int ch = s.level_channels(k);
      const int below = k + 1 == s.depth ? s.level_channels(s.depth) : s.level_channels(k + 1);
      decoders.push_back({ConvTranspose2x2(p + ".up", below, ch),
                          Conv2d(p + ".conv1", 2 * ch, ch, 3, 1, 1),
                          Conv2d(p + ".conv2", ch, ch, 3, 1, 1), LeakyRelu(slope),
                          LeakyRelu(slope), LeakyRelu(slope)});
    }
    // Skip wiring: decoder k concatenates its upsampled features with encoder k's output.
    for (int k = 0; k < s.depth; ++k) {
      const int skip = encoders[k].conv2.out_channels();
      const int up = decoders[k].up.out_channels();
      const int below = k + 1 < s.depth ? decoders[k + 1].conv2.out_channels() : mid2.out_channels();
      if (decoders[k].conv1.in_channels() != skip + up || decoders[k].up.in_channels() != below ||
          encoders[k].down.out_channels() !=
              (k + 1 < s.depth ? encoders[k + 1].conv1.in_channels() : mid1.in_channels())) {
        throw ShapeError("skip connection mismatch at level " + std::to_string(k));
      }
    }
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    auto conv = [&](Conv2d& c) {
      out.push_back(&c.weight);
      out.push_back(&c.bias);
    };
    for (auto& e : encoders) {
      conv(e.conv1);
      conv(e.conv2);
      conv(e.down);
    }
    conv(mid1);
    conv(mid2);
    for (auto& d : decoders) {
      out.push_back(&d.up.weight);
      out.push_back(&d.up.bias);
      conv(d.conv1);
      conv(d.conv2);
    }
    conv(head);
    return out;
  }
};

CustomUNet::CustomUNet(const ModelSpec& spec, std::uint64_t init_seed)
    : spec_(spec), impl_(std::make_unique<Impl>(spec)) {
  std::mt19937_64 rng(init_seed);
  const double gain = std::sqrt(2.0 / (1.0 + spec.leaky_slope * spec.leaky_slope));
  for (Parameter* p : parameters()) {
    if (p->shape.size() != 4) {
      continue;  // biases start at zero
    }
    // Conv weights are out×in×k×k, transposed-conv weights in×out×2×2 (fan-in = in).
    const bool transposed = p->name.find(".up.") != std::string::npos;
    const double fan_in = transposed ? p->shape[0] : static_cast<double>(p->shape[1]) *
                                                          p->shape[2] * p->shape[3];
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    for (float& w : p->value) {
      w = static_cast<float>(dist(rng));
    }
  }
}

CustomUNet::~CustomUNet() = default;

std::vector<Parameter*> CustomUNet::parameters() { return impl_->parameters(); }

Tensor CustomUNet::forward(const Tensor& input, bool training) {
  const Shape4& s = input.shape();
  if (s.h % divisor() != 0 || s.w % divisor() != 0) {
    throw ShapeError("dims must be divisible by " + std::to_string(divisor()) + ", got " +
                     std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  Impl& m = *impl_;
  std::vector<Tensor> skips;
  Tensor x = input;
  for (auto& e : m.encoders) {
    Tensor h = e.act1.forward(e.conv1.forward(x, training), training);
    h = e.act2.forward(e.conv2.forward(h, training), training);
    x = e.act_down.forward(e.down.forward(h, training), training);
    skips.push_back(std::move(h));
  }
  x = m.act_mid1.forward(m.mid1.forward(x, training), training);
  x = m.act_mid2.forward(m.mid2.forward(x, training), training);
  for (int k = spec_.depth - 1; k >= 0; --k) {
    auto& d = m.decoders[static_cast<std::size_t>(k)];
    Tensor u = d.act_up.forward(d.up.forward(x, training), training);
    x = d.act1.forward(d.conv1.forward(concat_channels(u, skips[static_cast<std::size_t>(k)]), training),
                       training);
    x = d.act2.forward(d.conv2.forward(x, training), training);
  }
  return m.head.forward(x, training);
}

void CustomUNet::backward(const Tensor& grad_out) {
  Impl& m = *impl_;
  Tensor g = m.head.backward(grad_out);
  std::vector<Tensor> skip_grads(static_cast<std::size_t>(spec_.depth));
  for (int k = 0; k < spec_.depth; ++k) {
    auto& d = m.decoders[static_cast<std::size_t>(k)];
    g = d.conv2.backward(d.act2.backward(std::move(g)));
    g = d.conv1.backward(d.act1.backward(std::move(g)));
    Tensor gu;
    split_channels(g, d.up.out_channels(), gu, skip_grads[static_cast<std::size_t>(k)]);
    g = d.up.backward(d.act_up.backward(std::move(gu)));
  }
  g = m.mid2.backward(m.act_mid2.backward(std::move(g)));
  g = m.mid1.backward(m.act_mid1.backward(std::move(g)));
  for (int k = spec_.depth - 1; k >= 0; --k) {
    auto& e = m.encoders[static_cast<std::size_t>(k)];
    g = e.down.backward(e.act_down.backward(std::move(g)));
    const Tensor& skip = skip_grads[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.data()[i] += skip.data()[i];
    }
    g = e.conv2.backward(e.act2.backward(std::move(g)));
    g = e.conv1.backward(e.act1.backward(std::move(g)));
  }
}

GlobalBias::GlobalBias(float initial) : bias_("bias", {1}) { bias_.value[0] = initial; }

Tensor GlobalBias::forward(const Tensor& x, bool /*training*/) {
  return Tensor(x.shape(), bias_.value[0]);
}

void GlobalBias::backward(const Tensor& grad_out) {
  double sum = 0.0;
  for (float g : grad_out.data()) {
    sum += g;
  }
  bias_.grad[0] += static_cast<float>(sum);
}

// ---------------------------------------------------------------------------

ArchitectureRegistry ArchitectureRegistry::with_builtins() {
  ArchitectureRegistry r;
  r.register_architecture(kCustomUNet, [](const ModelSpec& spec, std::uint64_t seed) {
    return std::make_unique<CustomUNet>(spec, seed);
  });
  return r;
}

void ArchitectureRegistry::register_architecture(const std::string& name,
                                                 ArchitectureBuilder builder) {
  if (builders_.contains(name)) {
    throw ConfigError("architecture '" + name + "' is already registered");
  }
  builders_.emplace(name, std::move(builder));
}

const ArchitectureBuilder& ArchitectureRegistry::lookup(const std::string& name) const {
  auto it = builders_.find(name);
  if (it == builders_.end()) {
    std::string known;
    for (const auto& n : names()) {
      known += (known.empty() ? "" : ", ") + ("\"" + n + "\"");
    }
    throw ConfigError("unknown architecture '" + name + "'; registered: [" + known + "]");
  }
  return it->second;
}

std::vector<std::string> ArchitectureRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : builders_) {
    out.push_back(name);
  }
  return out;
}

ArchitectureRegistry& default_registry() {
  static ArchitectureRegistry registry = ArchitectureRegistry::with_builtins();
  return registry;
}

TrainedModel build_model(const ModelSpec& spec, std::uint64_t init_seed,
                         const ArchitectureRegistry& registry) {
  spec.validate();
  TrainedModel model;
  model.spec = spec;
  model.network = registry.lookup(spec.architecture)(spec, init_seed);
  return model;
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) {
    return 0;
  }
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) {
    i += period;
  }
  return i < n ? i : period - i;
}

}  // namespace

Tensor reflect_pad(const Tensor& x, int height, int width) {
  const Shape4& s = x.shape();
  Tensor out({s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.plane(n, c);
      float* dst = out.plane(n, c);
      for (int r = 0; r < height; ++r) {
        const int sr = reflect_index(r, s.h);
        for (int col = 0; col < width; ++col) {
          dst[r * width + col] = src[sr * s.w + reflect_index(col, s.w)];
        }
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& x, int height, int width) {
  const Shape4& s = x.shape();
  Tensor out({s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.plane(n, c);
      float* dst = out.plane(n, c);
      for (int r = 0; r < height; ++r) {
        std::copy_n(src + static_cast<std::size_t>(r) * s.w, width,
                    dst + static_cast<std::size_t>(r) * width);
      }
    }
  }
  return out;
}

Tensor forward(TrainedModel& model, const Tensor& batch, PaddingPolicy policy, ForwardMode mode) {
  if (!model.network) {
    throw ConfigError("model has no network");
  }
  const Shape4& s = batch.shape();
  const int div = model.network->divisor();
  Tensor out;
  if (s.h % div == 0 && s.w % div == 0) {
    out = model.network->forward(batch, false);
  } else if (policy == PaddingPolicy::Strict) {
    throw ShapeError("dims must be divisible by " + std::to_string(div) + ", got " +
                     std::to_string(s.h) + "x" + std::to_string(s.w));
  } else {
    const int ph = (s.h + div - 1) / div * div;
    const int pw = (s.w + div - 1) / div * div;
    out = crop(model.network->forward(reflect_pad(batch, ph, pw), false), s.h, s.w);
  }
  if (mode == ForwardMode::Inference) {
    for (float& v : out.data()) {
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

}  // namespace annoclean

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "annoclean/checkpoint.hpp"
#include "annoclean/datagen.hpp"
#include "annoclean/optimizer.hpp"
#include "annoclean/train.hpp"

namespace annoclean {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("annoclean_train_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// One scalar target per sample; the input carries nothing.
class ScalarSource final : public BatchSource {
 public:
  explicit ScalarSource(std::vector<float> targets) : targets_(std::move(targets)) {}
  std::size_t size() const override { return targets_.size(); }
  void fill(std::span<const std::size_t> indices, Tensor& input, Tensor& target) override {
    const int n = static_cast<int>(indices.size());
    input = Tensor({n, 1, 1, 1});
    target = Tensor({n, 1, 1, 1});
    for (int i = 0; i < n; ++i) {
      target.data()[static_cast<std::size_t>(i)] = targets_[indices[static_cast<std::size_t>(i)]];
    }
  }

 private:
  std::vector<float> targets_;
};

TrainConfig scalar_config(const std::string& loss, int epochs, int batch) {
  TrainConfig cfg;
  cfg.loss = LossSpec::parse(loss);
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.optimizer.learning_rate = 1e-3;
  cfg.optimizer.momentum = 0.0;
  cfg.optimizer.weight_decay = 0.0;
  return cfg;
}

TEST(TrainConfig, BatchAndEpochsAreMandatory) {
  TrainConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.batch_size = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.epochs = 1;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_THROW(parse_scheme("n2x"), ConfigError);
  EXPECT_EQ(parse_scheme("N2C"), Scheme::N2C);
}

TEST(LrSchedule, CosineEndpointsAndParsing) {
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(1e-3, LrSchedule::Cosine, 0, 100), 1e-3);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(1e-3, LrSchedule::Cosine, 50, 100), 5e-4);
  EXPECT_NEAR(scheduled_learning_rate(1e-3, LrSchedule::Cosine, 100, 100), 0.0, 1e-18);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(1e-3, LrSchedule::Constant, 99, 100), 1e-3);
  double prev = 1.0;
  for (int s = 0; s <= 20; ++s) {
    const double lr = scheduled_learning_rate(1.0, LrSchedule::Cosine, s, 20);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_EQ(parse_lr_schedule("cosine"), LrSchedule::Cosine);
  EXPECT_EQ(to_string(parse_lr_schedule("constant")), "constant");
  EXPECT_THROW(parse_lr_schedule("step"), ConfigError);
}

TEST(RmsProp, FirstStepMatchesClosedForm) {
  Parameter p("w", {1});
  p.value[0] = 1.0f;
  p.grad[0] = 0.5f;
  RmsPropConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  RmsProp opt(cfg);
  std::vector<Parameter*> params = {&p};
  opt.step(params);
  // v = (1−α)g², so g/√v = 1/√(1−α) = 10.
  EXPECT_NEAR(p.value[0], 1.0 - 1e-3 * 10.0, 1e-6);
  p.grad[0] = 0.5f;
  opt.step(params);
  const double v2 = 0.99 * 0.01 * 0.25 + 0.01 * 0.25;
  const double b2 = 0.9 * 10.0 + 0.5 / std::sqrt(v2);
  EXPECT_NEAR(p.value[0], 1.0 - 1e-3 * 10.0 - 1e-3 * b2, 1e-6);
  EXPECT_EQ(opt.state().steps, 2);
}

TEST(GlobalBiasTraining, ConstantTargetsReachTheConstant) {
  GlobalBias model;
  ScalarSource source(std::vector<float>(64, 0.7f));
  train_network(model, source, scalar_config("mse", 200, 8));
  EXPECT_NEAR(model.value(), 0.7, 1e-3);
}

TEST(GlobalBiasTraining, NoisyTargetsReachTheirMean) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  std::vector<float> targets(2000);
  double mean = 0.0;
  for (float& t : targets) {
    t = 0.4f + noise(rng);
    mean += t;
  }
  mean /= targets.size();
  GlobalBias model;
  TrainConfig cfg = scalar_config("mse", 10, 16);
  cfg.optimizer.learning_rate = 5e-4;
  ScalarSource source(targets);
  train_network(model, source, cfg);
  EXPECT_NEAR(model.value(), mean, 2e-2);
}

TEST(TrainNetwork, DeterministicForFixedSeed) {
  std::vector<float> targets;
  for (int i = 0; i < 40; ++i) {
    targets.push_back(static_cast<float>(i % 7) / 7.0f);
  }
  auto run = [&](std::uint64_t seed) {
    GlobalBias model;
    ScalarSource source(targets);
    TrainConfig cfg = scalar_config("l1", 3, 5);
    cfg.seed = seed;
    return train_network(model, source, cfg).values();
  };
  EXPECT_EQ(run(4), run(4));
  EXPECT_NE(run(4), run(5));
}

TEST(TrainNetwork, EveryEpochVisitsEverySampleOnce) {
  GlobalBias model;
  ScalarSource source(std::vector<float>(23, 0.0f));
  std::vector<std::vector<std::size_t>> seen(3);
  TrainOptions options;
  options.on_batch = [&](int epoch, std::int64_t, std::span<const std::size_t> idx, const Tensor&,
                         const Tensor&) {
    seen[static_cast<std::size_t>(epoch)].insert(seen[static_cast<std::size_t>(epoch)].end(),
                                                 idx.begin(), idx.end());
  };
  const LossCurve curve = train_network(model, source, scalar_config("l1", 3, 4), options);
  EXPECT_EQ(curve.steps.size(), 3u * 6u);
  for (auto& s : seen) {
    std::sort(s.begin(), s.end());
    ASSERT_EQ(s.size(), 23u);
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s[i], i);
    }
  }
}

TEST(TrainNetwork, NonFiniteLossStopsWithStep) {
  GlobalBias model;
  std::vector<float> targets(8, 0.0f);
  targets[5] = std::numeric_limits<float>::quiet_NaN();
  ScalarSource source(targets);
  try {
    train_network(model, source, scalar_config("mse", 1, 1));
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_GE(e.step(), 0);
    EXPECT_LT(e.step(), 8);
  }
}

TEST(TrainNetwork, EmptySourceIsConfigError) {
  GlobalBias model;
  ScalarSource source({});
  EXPECT_THROW(train_network(model, source, scalar_config("l1", 1, 1)), ConfigError);
}

LossCurve curve_of(const std::vector<double>& values) {
  LossCurve c;
  for (std::size_t i = 0; i < values.size(); ++i) {
    c.steps.push_back({static_cast<std::int64_t>(i), values[i]});
  }
  return c;
}

TEST(ConvergenceStep, Examples) {
  const Convergence flat = convergence_step(curve_of(std::vector<double>(300, 1.0)), 50, 0.05);
  EXPECT_EQ(flat.index, 0u);
  EXPECT_EQ(flat.step, 0);

  // 1.0 for 100 steps, then 0.1: any window still holding a 1.0 averages above 0.105.
  std::vector<double> drop(400, 0.1);
  std::fill(drop.begin(), drop.begin() + 100, 1.0);
  const Convergence d = convergence_step(curve_of(drop), 50, 0.05);
  EXPECT_EQ(d.index, 100u);
  EXPECT_FALSE(d.degenerate);

  std::vector<double> rising(300);
  for (std::size_t i = 0; i < rising.size(); ++i) {
    rising[i] = std::exp(0.05 * static_cast<double>(i));
  }
  EXPECT_TRUE(convergence_step(curve_of(rising), 50, 0.05).degenerate);
  EXPECT_THROW(convergence_step(curve_of(std::vector<double>(50, 1.0)), 50, 0.05), ConfigError);
}

TEST(ConvergenceStep, MatchesBruteForceOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(200);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = 2.0 * std::exp(-0.02 * static_cast<double>(i)) + 0.2 * u(rng);
    }
    const std::size_t w = 10 + static_cast<std::size_t>(trial);
    auto avg = [&](std::size_t s) {
      double acc = 0.0;
      for (std::size_t k = s; k < s + w; ++k) {
        acc += v[k];
      }
      return acc / static_cast<double>(w);
    };
    const double target = avg(v.size() - w);
    std::size_t want = v.size() - w;
    for (std::size_t s = 0; s + w <= v.size(); ++s) {
      if (std::abs(avg(s) - target) <= 0.05 * std::abs(target) + 1e-12) {
        want = s;
        break;
      }
    }
    EXPECT_EQ(convergence_step(curve_of(v), w, 0.05).index, want);
  }
}

TEST(LossCsv, RoundTrip) {
  TempDir tmp;
  LossCurve c = curve_of({0.5, 0.25, 1e-7, 3.125});
  write_loss_csv(c, tmp.path() / "loss.csv");
  const LossCurve back = read_loss_csv(tmp.path() / "loss.csv");
  ASSERT_EQ(back.steps.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.steps[i].step, c.steps[i].step);
    EXPECT_DOUBLE_EQ(back.steps[i].loss, c.steps[i].loss);
  }
  std::ifstream in(tmp.path() / "loss.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,loss");
}

class ManifestFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    const fs::path clean = tmp.path() / "clean_src";
    fs::create_directories(clean);
    const auto frames = procedural_clean_images(4, {32, 32}, 2);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      write_png(clean / ("f" + std::to_string(i) + ".png"), frames[i]);
    }
    BuildOptions opts;
    opts.fractions = {1.0, 0.0, 0.0};
    manifest = build_dataset(clean, AnnotationKind::BodyMarker, 12, 3, tmp.path() / "ds", opts);
  }

  TrainConfig unet_config(Scheme scheme, int epochs) const {
    TrainConfig cfg;
    cfg.scheme = scheme;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.seed = 6;
    cfg.optimizer.learning_rate = 1e-4;
    return cfg;
  }

  static ModelSpec tiny() {
    ModelSpec spec;
    spec.depth = 2;
    spec.base_channels = 4;
    return spec;
  }

  TempDir tmp;
  DatasetManifest manifest;
};

TEST_F(ManifestFixture, SchemeChoosesTheTarget) {
  for (Scheme scheme : {Scheme::N2N, Scheme::N2C}) {
    TrainOptions options;
    int checked = 0;
    options.on_batch = [&](int, std::int64_t, std::span<const std::size_t> idx,
                           const Tensor& input, const Tensor& target) {
      const std::vector<std::string>& ids = manifest.split_records("train");
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const SampleTuple t =
            load_sample(manifest, ids[idx[b]], NormalizationMode::Linear);
        const Image& want = scheme == Scheme::N2N ? t.noisy_b : t.clean;
        for (int y = 0; y < 32; ++y) {
          for (int x = 0; x < 32; ++x) {
            for (int c = 0; c < 3; ++c) {
              ASSERT_EQ(target.at(static_cast<int>(b), c, y, x), want.at(y, x, c));
              ASSERT_EQ(input.at(static_cast<int>(b), c, y, x), t.noisy_a.at(y, x, c));
            }
          }
        }
        ++checked;
      }
    };
    train(build_model(tiny(), 1), manifest, unet_config(scheme, 1), options);
    EXPECT_EQ(checked, 12);
  }
}

TEST_F(ManifestFixture, ModelMetaIsStamped) {
  const TrainOutcome out = train(build_model(tiny(), 1), manifest, unet_config(Scheme::N2C, 1));
  EXPECT_EQ(out.model.meta.scheme, "n2c");
  EXPECT_EQ(out.model.meta.loss, "l1");
  EXPECT_EQ(out.model.meta.epochs, 1);
  EXPECT_EQ(out.model.meta.seed, 6u);
  EXPECT_EQ(out.curve.steps.size(), 3u);
}

TEST_F(ManifestFixture, IndivisibleDatasetIsRejected) {
  ModelSpec spec = tiny();
  spec.depth = 6;
  EXPECT_THROW(train(build_model(spec, 1), manifest, unet_config(Scheme::N2N, 1)), ConfigError);
}

TEST_F(ManifestFixture, ResumeReproducesUninterruptedRun) {
  TrainOptions full_opts;
  full_opts.checkpoint_dir = tmp.path() / "full";
  const TrainOutcome full =
      train(build_model(tiny(), 1), manifest, unet_config(Scheme::N2N, 3), full_opts);
  for (int e = 1; e <= 3; ++e) {
    EXPECT_TRUE(fs::exists(tmp.path() / "full" / ("epoch_" + std::to_string(e) + ".ckpt")));
  }

  Checkpoint ck = load_checkpoint(tmp.path() / "full" / "epoch_1.ckpt");
  ASSERT_TRUE(ck.resume && ck.optimizer);
  EXPECT_EQ(ck.resume->epochs_completed, 1);
  TrainOptions resume_opts;
  resume_opts.resume = ck.resume;
  resume_opts.optimizer_state = ck.optimizer;
  const TrainOutcome resumed =
      train(std::move(ck.model), manifest, unet_config(Scheme::N2N, 3), resume_opts);

  EXPECT_EQ(resumed.curve.values(), full.curve.values());
  const auto a = std::as_const(*full.model.network).parameters();
  const auto b = std::as_const(*resumed.model.network).parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  }
}

}  // namespace
}  // namespace annoclean

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "annoclean/datagen.hpp"
#include "annoclean/metrics.hpp"
#include "annoclean/model.hpp"
#include "annoclean/train.hpp"

namespace annoclean {

struct DatasetSection {
  /// Directory of clean PNGs. When absent, `procedural_count` frames are generated instead.
  std::optional<std::filesystem::path> clean_dir;
  int procedural_count = 0;
  Dims procedural_dims{64, 64};
  std::optional<std::filesystem::path> stamp_dir;
  AnnotationKind kind = AnnotationKind::BodyMarker;
  std::size_t n_pairs = 200;
  std::uint64_t seed = 0;
  std::filesystem::path out = "dataset";
  SplitFractions fractions;
};

struct EvalSection {
  double tau = kDefaultTau;
  std::string split = "test";
  SsimParams ssim;
};

struct MatrixSection {
  std::vector<Scheme> schemes;
  std::vector<LossSpec> losses;
  std::vector<NormalizationMode> normalizations;
};

struct ExperimentConfig {
  DatasetSection dataset;
  ModelSpec model;
  TrainConfig train;
  EvalSection eval;
  MatrixSection matrix;
  std::filesystem::path runs_dir = "runs";
  /// Prefix for generated run ids; empty for none.
  std::string run_prefix;

  std::filesystem::path manifest_path() const { return dataset.out / kManifestFileName; }
};

/// Parses TOML text. Relative paths resolve against `base_dir`. Unknown keys, bad enum names
/// and out-of-range values throw ConfigError.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// TOML rendering with every field spelled out, including defaults. Paths are absolute.
std::string to_toml(const ExperimentConfig& config);

struct RunCell {
  std::string run_id;
  TrainConfig train;
};

/// One cell per scheme × loss × normalization combination; axes left empty take the train
/// section's value. Throws ConfigError on duplicate run ids.
std::vector<RunCell> expand_matrix(const ExperimentConfig& config);

/// "n2n-l1-linear" style id, with the configured prefix.
std::string make_run_id(const std::string& prefix, const TrainConfig& train);

/// Environment override for the master seed; throws ConfigError when set but not an integer.
std::optional<std::uint64_t> seed_from_env();

}  // namespace annoclean

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "annoclean/image.hpp"
#include "annoclean/synth.hpp"

namespace annoclean {

inline constexpr const char* kManifestVersion = "annoclean-manifest/1";
inline constexpr const char* kManifestFileName = "manifest.json";
inline constexpr double kNormalizationEpsilon = 1e-6;

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
};

enum class NormalizationMode { Linear, SMN };

std::string_view to_string(NormalizationMode mode);
NormalizationMode parse_normalization(std::string_view name);

struct SampleTuple {
  Image noisy_a;
  Image noisy_b;
  Image clean;
  BinaryMask mask_a;
  BinaryMask mask_b;
};

struct RecordEntry {
  std::string record_id;
  /// Index of the source clean image; records sharing it always share a split.
  int clean_group = 0;
  std::string clean_source;
  std::string clean_path;
  std::string noisy_a_path;
  std::string noisy_b_path;
  std::string mask_a_path;
  std::string mask_b_path;
  std::uint64_t per_record_seed = 0;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

inline constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

struct DatasetManifest {
  std::string version = kManifestVersion;
  std::uint64_t master_seed = 0;
  AnnotationKind annotation_kind = AnnotationKind::BodyMarker;
  Dims image_dims;
  std::vector<RecordEntry> records;
  ChannelStats channel_stats;
  std::map<std::string, std::vector<std::string>> splits;
  SplitFractions split_fractions;
  std::uint64_t split_seed = 0;

  /// Directory the relative record paths resolve against; not serialized.
  std::filesystem::path root;

  const RecordEntry& record(const std::string& record_id) const;
  const std::vector<std::string>& split_records(const std::string& name) const;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Population mean and standard deviation per channel over every pixel of every image.
ChannelStats compute_channel_stats(std::span<const Image> images);

/// Applies `mode` in place. SMN divides by max(std, epsilon).
void normalize(Image& image, NormalizationMode mode, const ChannelStats& stats);
void denormalize(Image& image, NormalizationMode mode, const ChannelStats& stats);

/// Ultrasound-like grayscale frames (fan-shaped field of view, speckle texture, lesions),
/// quantized to 8-bit codes and replicated to three channels.
std::vector<Image> procedural_clean_images(int count, Dims dims, std::uint64_t seed);

/// Sorted PNG paths of a clean-image directory; throws ConfigError if missing or empty.
std::vector<std::filesystem::path> list_clean_images(const std::filesystem::path& clean_dir);

/// Deterministic, pairwise-distinct seed for record `index` under `master_seed`.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

struct BuildOptions {
  SynthConfig synth;
  std::optional<StampLibrary> library;  // builtin glyphs when empty
  SplitFractions fractions;
  std::optional<std::uint64_t> split_seed;  // master seed when empty
  bool overwrite = false;
};

/// Generates `n_pairs` sample tuples under `out_dir` and writes `manifest.json`.
DatasetManifest build_dataset(const std::filesystem::path& clean_dir, AnnotationKind kind,
                              std::size_t n_pairs, std::uint64_t master_seed,
                              const std::filesystem::path& out_dir,
                              const BuildOptions& options = {});

SampleTuple load_sample(const DatasetManifest& manifest, const std::string& record_id,
                        NormalizationMode normalization);

/// Partitions clean-image groups (never individual records) with a seeded shuffle and
/// largest-remainder rounding of the group counts.
DatasetManifest split(DatasetManifest manifest, const SplitFractions& fractions,
                      std::uint64_t seed);

/// Dataset-size presets used for the published experiments.
struct ScalePreset {
  AnnotationKind kind;
  std::size_t clean_images;
  std::size_t pairs;
};
ScalePreset paper_scale_preset(AnnotationKind kind);

}  // namespace annoclean

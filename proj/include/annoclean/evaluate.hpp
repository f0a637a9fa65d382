#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "annoclean/datagen.hpp"
#include "annoclean/metrics.hpp"
#include "annoclean/model.hpp"

namespace annoclean {

/// Produces a restored image in linear [0,1] scale from a linearly-scaled sample.
class Restorer {
 public:
  virtual ~Restorer() = default;
  virtual Image restore(const SampleTuple& sample) = 0;
};

/// Runs a trained network on noisy_a with the model's normalization, then denormalizes and
/// clamps to [0,1].
class ModelRestorer final : public Restorer {
 public:
  ModelRestorer(TrainedModel& model, NormalizationMode normalization, const ChannelStats& stats);
  Image restore(const SampleTuple& sample) override;

 private:
  TrainedModel& model_;
  NormalizationMode normalization_;
  ChannelStats stats_;
};

/// Harness self-test: returns the clean image.
class PerfectRestorer final : public Restorer {
 public:
  Image restore(const SampleTuple& sample) override { return sample.clean; }
};

/// Returns its input unchanged.
class IdentityRestorer final : public Restorer {
 public:
  Image restore(const SampleTuple& sample) override { return sample.noisy_a; }
};

inline constexpr std::array<const char*, 5> kMetricNames = {"Dice", "IoU", "PA", "SSIM",
                                                            "PSNR_HVS_M"};

struct MetricStat {
  double mean = 0.0;
  double variance = 0.0;  // population variance over test records
};

struct RecordScores {
  std::string record_id;
  std::array<double, 5> values{};  // kMetricNames order
};

struct MetricReport {
  std::string method = "Costumed U-Net";
  std::string training_mode;
  std::array<MetricStat, 5> stats{};  // kMetricNames order
  std::size_t n_samples = 0;
  std::string fingerprint;
  std::vector<RecordScores> records;

  const MetricStat& stat(const std::string& metric) const;
};

/// Scores every record of `split`: segmentation from |noisy_a − restored| >= tau against
/// mask_a, and SSIM / PSNR-HVS-M of restored against clean.
MetricReport evaluate(Restorer& restorer, const DatasetManifest& manifest, const std::string& split,
                      double tau = kDefaultTau, const SsimParams& ssim_params = {});

/// Convenience overload for a trained model.
MetricReport evaluate(TrainedModel& model, const DatasetManifest& manifest, const std::string& split,
                      double tau = kDefaultTau, const SsimParams& ssim_params = {});

/// "N2N", "N2C SMN", ... from training metadata.
std::string training_mode_label(const TrainingMeta& meta);

/// Mean and population variance.
MetricStat mean_and_variance(std::span<const double> values);

/// metric,mean,variance,n_samples rows.
void write_report_csv(const MetricReport& report, const std::filesystem::path& path);
/// record_id followed by the five per-record scores.
void write_record_csv(const MetricReport& report, const std::filesystem::path& path);
/// One row per report: method, training_mode, n_samples, then <metric>_mean,<metric>_var.
void write_comparison_csv(std::span<const MetricReport> reports,
                          const std::filesystem::path& path);

/// Aligned text table, one row per report: Method | Training Mode | Dice | IoU | PA | SSIM |
/// PSNR_HVS_M, each cell "mean±variance".
std::string format_report_table(std::span<const MetricReport> reports);

/// Stable 64-bit FNV-1a hex digest.
std::string fingerprint(const std::string& text);

}  // namespace annoclean

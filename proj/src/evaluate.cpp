#include "annoclean/evaluate.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "annoclean/error.hpp"

namespace annoclean {

ModelRestorer::ModelRestorer(TrainedModel& model, NormalizationMode normalization,
                             const ChannelStats& stats)
    : model_(model), normalization_(normalization), stats_(stats) {}

Image ModelRestorer::restore(const SampleTuple& sample) {
  Image input = sample.noisy_a;
  normalize(input, normalization_, stats_);
  Image out = batch_to_image(
      forward(model_, image_to_batch(input), PaddingPolicy::ReflectPad, ForwardMode::Raw), 0);
  denormalize(out, normalization_, stats_);
  for (float& v : out.data()) {
    v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

const MetricStat& MetricReport::stat(const std::string& metric) const {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (metric == kMetricNames[i]) {
      return stats[i];
    }
  }
  throw ConfigError("unknown metric '" + metric + "'");
}

MetricStat mean_and_variance(std::span<const double> values) {
  MetricStat s;
  if (values.empty()) {
    return s;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) {
    sq += (v - s.mean) * (v - s.mean);
  }
  s.variance = sq / static_cast<double>(values.size());
  return s;
}

MetricReport evaluate(Restorer& restorer, const DatasetManifest& manifest, const std::string& split,
                      double tau, const SsimParams& ssim_params) {
  const auto& ids = manifest.split_records(split);
  if (ids.empty()) {
    throw ConfigError("split '" + split + "' is empty");
  }
  MetricReport report;
  std::array<std::vector<double>, 5> columns;
  for (const auto& id : ids) {
    RecordScores scores;
    scores.record_id = id;
    try {
      const SampleTuple sample = load_sample(manifest, id, NormalizationMode::Linear);
      const Image restored = restorer.restore(sample);
      if (restored.dims() != sample.clean.dims() || restored.channels() != 3) {
        throw ShapeError("restored image is " + to_string(restored.dims()) + ", expected " +
                         to_string(sample.clean.dims()));
      }
      const BinaryMask seg = extract_segmentation(sample.noisy_a, restored, tau);
      scores.values = {dice(seg, sample.mask_a), iou(seg, sample.mask_a),
                       pixel_accuracy(seg, sample.mask_a),
                       std::clamp(ssim(restored, sample.clean, ssim_params), 0.0, 1.0),
                       psnr_hvs_m(sample.clean, restored)};
    } catch (const Error& e) {
      throw Error("record " + id + ": " + e.what(), e.code());
    }
    for (std::size_t m = 0; m < columns.size(); ++m) {
      columns[m].push_back(scores.values[m]);
    }
    report.records.push_back(std::move(scores));
  }
  for (std::size_t m = 0; m < columns.size(); ++m) {
    report.stats[m] = mean_and_variance(columns[m]);
  }
  report.n_samples = ids.size();
  std::ostringstream fp;
  fp << manifest.master_seed << '|' << split << '|' << tau << '|' << ssim_params.window << ','
     << ssim_params.sigma << ',' << ssim_params.k1 << ',' << ssim_params.k2;
  for (const auto& id : ids) {
    fp << '|' << id;
  }
  report.fingerprint = fingerprint(fp.str());
  return report;
}

MetricReport evaluate(TrainedModel& model, const DatasetManifest& manifest, const std::string& split,
                      double tau, const SsimParams& ssim_params) {
  ModelRestorer restorer(model, parse_normalization(model.meta.normalization),
                         manifest.channel_stats);
  MetricReport report = evaluate(restorer, manifest, split, tau, ssim_params);
  report.training_mode = training_mode_label(model.meta);
  report.fingerprint = fingerprint(report.fingerprint + "|" + to_json(model.spec).dump() + "|" +
                                   to_json(model.meta).dump());
  return report;
}

std::string training_mode_label(const TrainingMeta& meta) {
  std::string label = meta.scheme;
  std::transform(label.begin(), label.end(), label.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (meta.normalization == "smn") {
    label += " SMN";
  }
  return label;
}

void write_report_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write report: " + path.string());
  }
  out.precision(17);
  out << "metric,mean,variance,n_samples\n";
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    out << kMetricNames[m] << ',' << report.stats[m].mean << ',' << report.stats[m].variance << ','
        << report.n_samples << '\n';
  }
}

void write_record_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write report: " + path.string());
  }
  out.precision(17);
  out << "record_id";
  for (const char* name : kMetricNames) {
    out << ',' << name;
  }
  out << '\n';
  for (const auto& r : report.records) {
    out << r.record_id;
    for (double v : r.values) {
      out << ',' << v;
    }
    out << '\n';
  }
}

void write_comparison_csv(std::span<const MetricReport> reports,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write report: " + path.string());
  }
  out.precision(17);
  out << "method,training_mode,n_samples";
  for (const char* name : kMetricNames) {
    out << ',' << name << "_mean," << name << "_var";
  }
  out << '\n';
  for (const auto& r : reports) {
    out << r.method << ',' << r.training_mode << ',' << r.n_samples;
    for (const auto& s : r.stats) {
      out << ',' << s.mean << ',' << s.variance;
    }
    out << '\n';
  }
}

std::string format_report_table(std::span<const MetricReport> reports) {
  auto cell = [](const MetricStat& s) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f±%.3f", s.mean, s.variance);
    return std::string(buf);
  };
  // Display width, counting the two-byte '±' as one column.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) {
      w += (ch & 0xC0) != 0x80;
    }
    return w;
  };

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Method", "Training Mode"});
  for (const char* name : kMetricNames) {
    rows.back().push_back(name);
  }
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.method, r.training_mode};
    for (const auto& s : r.stats) {
      row.push_back(cell(s));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], width(row[i]));
    }
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    out += "|";
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += " " + row[i] + std::string(widths[i] - width(row[i]), ' ') + " |";
    }
    out += "\n";
  };
  std::string rule = "+";
  for (std::size_t w : widths) {
    rule += std::string(w + 2, '-') + "+";
  }
  rule += "\n";
  out += rule;
  emit(rows.front());
  out += rule;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    emit(rows[i]);
  }
  out += rule;
  return out;
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace annoclean

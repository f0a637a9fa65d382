#include "annoclean/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "annoclean/error.hpp"

namespace annoclean {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<const char*, 5> kTupleDirs = {"clean", "noisy_a", "noisy_b", "mask_a",
                                                   "mask_b"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string record_id_for(std::size_t index, std::size_t total) {
  const int width = std::max<int>(6, static_cast<int>(std::to_string(total).size()));
  std::string digits = std::to_string(index);
  return std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(width, digits.size()),
                     '0') +
         digits;
}

json to_json(const ChannelStats& s) {
  return json{{"mean", s.mean}, {"std", s.std}};
}

ChannelStats stats_from_json(const json& j) {
  ChannelStats s;
  s.mean = j.at("mean").get<std::array<double, 3>>();
  s.std = j.at("std").get<std::array<double, 3>>();
  return s;
}

Image checked_read(const DatasetManifest& manifest, const RecordEntry& rec,
                   const std::string& rel) {
  const fs::path path = manifest.root / rel;
  if (!fs::exists(path)) {
    throw ConfigError("record " + rec.record_id + ": missing file " + path.string());
  }
  return read_png(path, 3);
}

BinaryMask checked_read_mask(const DatasetManifest& manifest, const RecordEntry& rec,
                             const std::string& rel) {
  const fs::path path = manifest.root / rel;
  if (!fs::exists(path)) {
    throw ConfigError("record " + rec.record_id + ": missing file " + path.string());
  }
  return read_mask_png(path);
}

void prepare_out_dir(const fs::path& out_dir, bool overwrite) {
  bool taken = fs::exists(out_dir / kManifestFileName);
  for (const char* sub : kTupleDirs) {
    taken = taken || fs::exists(out_dir / sub);
  }
  if (taken && !overwrite) {
    throw CollisionError("dataset directory already populated: " + out_dir.string() +
                         " (use --force to overwrite)");
  }
  if (taken) {
    fs::remove(out_dir / kManifestFileName);
    for (const char* sub : kTupleDirs) {
      fs::remove_all(out_dir / sub);
    }
  }
  for (const char* sub : kTupleDirs) {
    fs::create_directories(out_dir / sub);
  }
}

}  // namespace

std::string_view to_string(NormalizationMode mode) {
  return mode == NormalizationMode::Linear ? "linear" : "smn";
}

NormalizationMode parse_normalization(std::string_view name) {
  if (name == "linear") {
    return NormalizationMode::Linear;
  }
  if (name == "smn" || name == "SMN") {
    return NormalizationMode::SMN;
  }
  throw ConfigError("unknown normalization '" + std::string(name) + "' (expected linear or smn)");
}

const RecordEntry& DatasetManifest::record(const std::string& record_id) const {
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const RecordEntry& r) { return r.record_id == record_id; });
  if (it == records.end()) {
    throw ConfigError("manifest has no record '" + record_id + "'");
  }
  return *it;
}

const std::vector<std::string>& DatasetManifest::split_records(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) {
    throw ConfigError("manifest has no split '" + name + "'");
  }
  return it->second;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back({{"record_id", r.record_id},
                       {"clean_group", r.clean_group},
                       {"clean_source", r.clean_source},
                       {"clean_path", r.clean_path},
                       {"noisy_a_path", r.noisy_a_path},
                       {"noisy_b_path", r.noisy_b_path},
                       {"mask_a_path", r.mask_a_path},
                       {"mask_b_path", r.mask_b_path},
                       {"per_record_seed", r.per_record_seed}});
  }
  json doc{{"version", m.version},
           {"master_seed", m.master_seed},
           {"annotation_kind", std::string(to_string(m.annotation_kind))},
           {"image_dims", {{"height", m.image_dims.height}, {"width", m.image_dims.width}}},
           {"records", std::move(records)},
           {"channel_stats", to_json(m.channel_stats)},
           {"splits", m.splits},
           {"split_fractions",
            {{"train", m.split_fractions.train},
             {"val", m.split_fractions.val},
             {"test", m.split_fractions.test}}},
           {"split_seed", m.split_seed}};
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write manifest: " + path.string());
  }
  out << doc.dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("manifest not found: " + path.string());
  }
  DatasetManifest m;
  try {
    const json doc = json::parse(in);
    m.version = doc.at("version").get<std::string>();
    if (m.version != kManifestVersion) {
      throw ConfigError("unsupported manifest version '" + m.version + "'");
    }
    m.master_seed = doc.at("master_seed").get<std::uint64_t>();
    m.annotation_kind = parse_annotation_kind(doc.at("annotation_kind").get<std::string>());
    m.image_dims = {doc.at("image_dims").at("height").get<int>(),
                    doc.at("image_dims").at("width").get<int>()};
    for (const auto& r : doc.at("records")) {
      RecordEntry e;
      e.record_id = r.at("record_id").get<std::string>();
      e.clean_group = r.at("clean_group").get<int>();
      e.clean_source = r.at("clean_source").get<std::string>();
      e.clean_path = r.at("clean_path").get<std::string>();
      e.noisy_a_path = r.at("noisy_a_path").get<std::string>();
      e.noisy_b_path = r.at("noisy_b_path").get<std::string>();
      e.mask_a_path = r.at("mask_a_path").get<std::string>();
      e.mask_b_path = r.at("mask_b_path").get<std::string>();
      e.per_record_seed = r.at("per_record_seed").get<std::uint64_t>();
      m.records.push_back(std::move(e));
    }
    m.channel_stats = stats_from_json(doc.at("channel_stats"));
    m.splits = doc.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    const json& f = doc.at("split_fractions");
    m.split_fractions = {f.at("train").get<double>(), f.at("val").get<double>(),
                         f.at("test").get<double>()};
    m.split_seed = doc.at("split_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  return m;
}

ChannelStats compute_channel_stats(std::span<const Image> images) {
  if (images.empty()) {
    throw ConfigError("compute_channel_stats: empty image sequence");
  }
  std::array<double, 3> sum{};
  std::size_t count = 0;
  for (const Image& img : images) {
    if (img.channels() != 3) {
      throw ShapeError("compute_channel_stats expects 3-channel images");
    }
    const auto px = img.data();
    for (std::size_t i = 0; i < px.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        sum[c] += px[i + c];
      }
    }
    count += img.dims().area();
  }
  ChannelStats stats;
  for (int c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / static_cast<double>(count);
  }
  // Second pass keeps the variance exact for constant inputs.
  std::array<double, 3> sq{};
  for (const Image& img : images) {
    const auto px = img.data();
    for (std::size_t i = 0; i < px.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        const double d = px[i + c] - stats.mean[c];
        sq[c] += d * d;
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    stats.std[c] = std::sqrt(sq[c] / static_cast<double>(count));
  }
  return stats;
}

void normalize(Image& image, NormalizationMode mode, const ChannelStats& stats) {
  if (mode == NormalizationMode::Linear) {
    return;
  }
  auto px = image.data();
  const int ch = image.channels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const int c = static_cast<int>(i % ch);
    px[i] = static_cast<float>((px[i] - stats.mean[c]) /
                               std::max(stats.std[c], kNormalizationEpsilon));
  }
}

void denormalize(Image& image, NormalizationMode mode, const ChannelStats& stats) {
  if (mode == NormalizationMode::Linear) {
    return;
  }
  auto px = image.data();
  const int ch = image.channels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const int c = static_cast<int>(i % ch);
    px[i] = static_cast<float>(px[i] * std::max(stats.std[c], kNormalizationEpsilon) +
                               stats.mean[c]);
  }
}

std::vector<Image> procedural_clean_images(int count, Dims dims, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  const int H = dims.height;
  const int W = dims.width;
  for (int n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    cv::Mat speckle(H, W, CV_64F);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        speckle.at<double>(r, c) = gauss(rng);
      }
    }
    cv::GaussianBlur(speckle, speckle, cv::Size(0, 0), 1.5, 1.5, cv::BORDER_REFLECT);
    cv::Scalar mu, sd;
    cv::meanStdDev(speckle, mu, sd);
    speckle = (speckle - mu[0]) / std::max(sd[0], 1e-9);

    const double base = 0.30 + 0.15 * uni(rng);
    const double band_period = 0.25 + 0.35 * uni(rng);
    const double band_phase = 2.0 * std::numbers::pi * uni(rng);
    const double fan_half_angle = (30.0 + 15.0 * uni(rng)) * std::numbers::pi / 180.0;
    const double apex_row = -0.15 * H;
    const double apex_col = W * (0.45 + 0.1 * uni(rng));
    const double r_near = 0.2 * H;
    const double r_far = 1.1 * H;

    cv::Mat lesion = cv::Mat::zeros(H, W, CV_64F);
    const int lesions = 1 + static_cast<int>(uni(rng) * 2.0);
    for (int k = 0; k < lesions; ++k) {
      const cv::Point center(static_cast<int>(W * (0.25 + 0.5 * uni(rng))),
                             static_cast<int>(H * (0.35 + 0.45 * uni(rng))));
      const cv::Size axes(static_cast<int>(W * (0.06 + 0.1 * uni(rng))),
                          static_cast<int>(H * (0.05 + 0.08 * uni(rng))));
      cv::ellipse(lesion, center, axes, 360.0 * uni(rng), 0, 360, 1.0, cv::FILLED, cv::LINE_8);
    }
    cv::GaussianBlur(lesion, lesion, cv::Size(0, 0), 1.5, 1.5, cv::BORDER_REFLECT);

    Image img(H, W, 3);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const double dy = r - apex_row;
        const double dx = c - apex_col;
        const double radius = std::hypot(dx, dy);
        const double theta = std::atan2(dx, dy);
        double v = 0.03;
        if (std::abs(theta) <= fan_half_angle && radius >= r_near && radius <= r_far) {
          const double depth = (radius - r_near) / (r_far - r_near);
          const double band = 0.08 * std::sin(2.0 * std::numbers::pi * r / (band_period * H) +
                                               band_phase);
          v = (base + band + 0.07 * speckle.at<double>(r, c)) * (1.0 - 0.35 * depth);
          v *= 1.0 - 0.65 * lesion.at<double>(r, c);
        }
        const float q = to_byte(static_cast<float>(v)) / 255.0f;
        img.at(r, c, 0) = q;
        img.at(r, c, 1) = q;
        img.at(r, c, 2) = q;
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<fs::path> list_clean_images(const fs::path& clean_dir) {
  if (!fs::is_directory(clean_dir)) {
    throw ConfigError("clean image directory not found: " + clean_dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(clean_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw ConfigError("clean image directory has no PNG files: " + clean_dir.string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

DatasetManifest build_dataset(const fs::path& clean_dir, AnnotationKind kind, std::size_t n_pairs,
                              std::uint64_t master_seed, const fs::path& out_dir,
                              const BuildOptions& options) {
  if (n_pairs < 1) {
    throw ConfigError("n_pairs must be at least 1");
  }
  const auto files = list_clean_images(clean_dir);
  std::vector<Image> cleans;
  cleans.reserve(files.size());
  for (const auto& f : files) {
    cleans.push_back(read_png(f, 3));
    if (cleans.back().dims() != cleans.front().dims()) {
      throw ConfigError("clean images must share one size: " + f.string() + " is " +
                        to_string(cleans.back().dims()) + ", expected " +
                        to_string(cleans.front().dims()));
    }
  }
  const Dims dims = cleans.front().dims();
  const StampLibrary library = options.library ? *options.library : builtin_stamp_library();

  prepare_out_dir(out_dir, options.overwrite);

  DatasetManifest manifest;
  manifest.master_seed = master_seed;
  manifest.annotation_kind = kind;
  manifest.image_dims = dims;
  manifest.root = out_dir;
  manifest.channel_stats = compute_channel_stats(cleans);

  // Shuffled round-robin: every clean image is used once per block of |clean| records.
  const std::size_t n_clean = cleans.size();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    if (i % n_clean == 0) {
      order.resize(n_clean);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng block_rng(derive_seed(master_seed ^ 0xC1EA7C1EA7ULL, i / n_clean));
      std::shuffle(order.begin(), order.end(), block_rng);
    }
    const std::size_t group = order[i % n_clean];
    const std::uint64_t seed = derive_seed(master_seed, i);
    Rng record_rng(seed);
    const std::uint64_t seed_a = record_rng();
    const std::uint64_t seed_b = record_rng();

    const Image& clean = cleans[group];
    const Composite a = composite(
        clean, render_annotation(random_placement(kind, library, dims, seed_a, options.synth),
                                 library, dims, options.synth));
    const Composite b = composite(
        clean, render_annotation(random_placement(kind, library, dims, seed_b, options.synth),
                                 library, dims, options.synth));

    RecordEntry rec;
    rec.record_id = record_id_for(i, n_pairs);
    rec.clean_group = static_cast<int>(group);
    rec.clean_source = files[group].filename().string();
    rec.clean_path = "clean/" + rec.record_id + ".png";
    rec.noisy_a_path = "noisy_a/" + rec.record_id + ".png";
    rec.noisy_b_path = "noisy_b/" + rec.record_id + ".png";
    rec.mask_a_path = "mask_a/" + rec.record_id + ".png";
    rec.mask_b_path = "mask_b/" + rec.record_id + ".png";
    rec.per_record_seed = seed;

    write_png(out_dir / rec.clean_path, clean);
    write_png(out_dir / rec.noisy_a_path, a.noisy);
    write_png(out_dir / rec.noisy_b_path, b.noisy);
    write_mask_png(out_dir / rec.mask_a_path, a.mask);
    write_mask_png(out_dir / rec.mask_b_path, b.mask);
    manifest.records.push_back(std::move(rec));
  }

  manifest = split(std::move(manifest), options.fractions, options.split_seed.value_or(master_seed));
  save_manifest(manifest, out_dir / kManifestFileName);
  return manifest;
}

SampleTuple load_sample(const DatasetManifest& manifest, const std::string& record_id,
                        NormalizationMode normalization) {
  const RecordEntry& rec = manifest.record(record_id);
  SampleTuple t{checked_read(manifest, rec, rec.noisy_a_path),
                checked_read(manifest, rec, rec.noisy_b_path),
                checked_read(manifest, rec, rec.clean_path),
                checked_read_mask(manifest, rec, rec.mask_a_path),
                checked_read_mask(manifest, rec, rec.mask_b_path)};
  normalize(t.noisy_a, normalization, manifest.channel_stats);
  normalize(t.noisy_b, normalization, manifest.channel_stats);
  normalize(t.clean, normalization, manifest.channel_stats);
  return t;
}

DatasetManifest split(DatasetManifest manifest, const SplitFractions& fractions,
                      std::uint64_t seed) {
  const std::array<double, 3> f = {fractions.train, fractions.val, fractions.test};
  if (std::any_of(f.begin(), f.end(), [](double x) { return x < 0.0; }) ||
      std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }

  std::vector<int> groups;
  for (const auto& r : manifest.records) {
    groups.push_back(r.clean_group);
  }
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  Rng rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  // Largest remainder; ties go to the earlier split.
  const std::size_t n = groups.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = f[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> by_remainder = {0, 1, 2};
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
    ++counts[by_remainder[k % 3]];
  }

  std::map<int, int> split_of_group;
  std::size_t cursor = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k) {
      split_of_group[groups[cursor++]] = s;
    }
  }

  manifest.splits.clear();
  for (const char* name : kSplitNames) {
    manifest.splits[name] = {};
  }
  for (const auto& r : manifest.records) {
    manifest.splits[kSplitNames[split_of_group.at(r.clean_group)]].push_back(r.record_id);
  }
  manifest.split_fractions = fractions;
  manifest.split_seed = seed;
  return manifest;
}

ScalePreset paper_scale_preset(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::BodyMarker:
      return {kind, 4975, 83900};
    case AnnotationKind::RadialLine:
      return {kind, 3936, 80000};
    case AnnotationKind::VascularFlow:
      return {kind, 250, 80000};
  }
  throw ConfigError("unknown annotation kind");
}

}  // namespace annoclean

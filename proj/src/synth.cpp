#include "annoclean/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "annoclean/error.hpp"

namespace annoclean {

namespace {

constexpr std::array<std::string_view, 3> kKindNames = {"body_marker", "radial_line",
                                                        "vascular_flow"};

std::size_t kind_index(AnnotationKind kind) { return static_cast<std::size_t>(kind); }

// Glyphs are drawn as 8-bit alpha masks with OpenCV (hard edges, LINE_8) and colorized.
AnnotationStamp stamp_from_alpha(AnnotationKind kind, const cv::Mat& alpha, Rgb color,
                                 std::string name) {
  AnnotationStamp stamp;
  stamp.kind = kind;
  stamp.name = std::move(name);
  stamp.nominal_size = {alpha.rows, alpha.cols};
  stamp.pixels = Image(alpha.rows, alpha.cols, 4);
  for (int r = 0; r < alpha.rows; ++r) {
    for (int c = 0; c < alpha.cols; ++c) {
      const float a = alpha.at<std::uint8_t>(r, c) / 255.0f;
      if (a <= 0.0f) {
        continue;
      }
      stamp.pixels.at(r, c, 0) = color.r;
      stamp.pixels.at(r, c, 1) = color.g;
      stamp.pixels.at(r, c, 2) = color.b;
      stamp.pixels.at(r, c, 3) = a;
    }
  }
  return stamp;
}

cv::Mat canvas(int size) { return cv::Mat::zeros(size, size, CV_8UC1); }

std::vector<AnnotationStamp> builtin_body_markers() {
  const Rgb cyan{0.0f, 1.0f, 1.0f};
  const Rgb yellow{1.0f, 1.0f, 0.0f};
  std::vector<AnnotationStamp> out;

  {  // torso outline with a probe bar
    cv::Mat a = canvas(20);
    cv::ellipse(a, {10, 4}, {3, 3}, 0, 0, 360, 255, 1, cv::LINE_8);
    cv::rectangle(a, cv::Rect(5, 8, 10, 11), 255, 1, cv::LINE_8);
    cv::line(a, {3, 13}, {16, 13}, 255, 2, cv::LINE_8);
    out.push_back(stamp_from_alpha(AnnotationKind::BodyMarker, a, cyan, "torso"));
  }
  {  // breast clock face with quadrant lines
    cv::Mat a = canvas(20);
    cv::circle(a, {10, 10}, 8, 255, 1, cv::LINE_8);
    cv::line(a, {10, 2}, {10, 18}, 255, 1, cv::LINE_8);
    cv::line(a, {2, 10}, {18, 10}, 255, 1, cv::LINE_8);
    cv::circle(a, {10, 10}, 2, 255, cv::FILLED, cv::LINE_8);
    out.push_back(stamp_from_alpha(AnnotationKind::BodyMarker, a, cyan, "breast"));
  }
  {  // kidney, partially transparent fill
    cv::Mat a = canvas(20);
    cv::ellipse(a, {10, 10}, {5, 8}, 0, 0, 360, 153, cv::FILLED, cv::LINE_8);
    cv::ellipse(a, {10, 10}, {5, 8}, 0, 0, 360, 255, 1, cv::LINE_8);
    cv::circle(a, {14, 10}, 2, 0, cv::FILLED, cv::LINE_8);
    out.push_back(stamp_from_alpha(AnnotationKind::BodyMarker, a, yellow, "kidney"));
  }
  {  // head and neck
    cv::Mat a = canvas(20);
    cv::circle(a, {10, 7}, 5, 255, 1, cv::LINE_8);
    cv::line(a, {8, 12}, {8, 18}, 255, 1, cv::LINE_8);
    cv::line(a, {12, 12}, {12, 18}, 255, 1, cv::LINE_8);
    cv::line(a, {3, 18}, {17, 18}, 255, 1, cv::LINE_8);
    out.push_back(stamp_from_alpha(AnnotationKind::BodyMarker, a, cyan, "head"));
  }
  {  // orientation arrow
    cv::Mat a = canvas(20);
    std::vector<cv::Point> arrow = {{2, 8}, {11, 8}, {11, 3}, {18, 10}, {11, 17}, {11, 12}, {2, 12}};
    cv::fillPoly(a, std::vector<std::vector<cv::Point>>{arrow}, 255, cv::LINE_8);
    out.push_back(stamp_from_alpha(AnnotationKind::BodyMarker, a, yellow, "arrow"));
  }
  return out;
}

AnnotationStamp builtin_cross(Rgb color, std::string name) {
  cv::Mat a = canvas(11);
  for (int i = 0; i < 11; ++i) {
    a.at<std::uint8_t>(i, i) = 255;
    a.at<std::uint8_t>(i, 10 - i) = 255;
  }
  return stamp_from_alpha(AnnotationKind::RadialLine, a, color, std::move(name));
}

// Straight color of the most opaque pixel; used for the radial connector line.
Rgb dominant_color(const AnnotationStamp& stamp) {
  float best = -1.0f;
  Rgb color;
  const Image& px = stamp.pixels;
  for (int r = 0; r < px.height(); ++r) {
    for (int c = 0; c < px.width(); ++c) {
      if (px.at(r, c, 3) > best) {
        best = px.at(r, c, 3);
        color = {px.at(r, c, 0), px.at(r, c, 1), px.at(r, c, 2)};
      }
    }
  }
  return color;
}

void blend_pixel(Image& layer, int row, int col, Rgb color, float alpha) {
  const float keep = 1.0f - alpha;
  layer.at(row, col, 0) = alpha * color.r + keep * layer.at(row, col, 0);
  layer.at(row, col, 1) = alpha * color.g + keep * layer.at(row, col, 1);
  layer.at(row, col, 2) = alpha * color.b + keep * layer.at(row, col, 2);
  layer.at(row, col, 3) = alpha + keep * layer.at(row, col, 3);
}

void blend_stamp(Image& layer, const AnnotationStamp& stamp, GridPos top_left, double scale) {
  const Dims src = stamp.nominal_size;
  const Dims dst = scaled_dims(src, scale);
  for (int r = 0; r < dst.height; ++r) {
    const int sr = std::min(src.height - 1, static_cast<int>((r + 0.5) * src.height / dst.height));
    for (int c = 0; c < dst.width; ++c) {
      const int sc = std::min(src.width - 1, static_cast<int>((c + 0.5) * src.width / dst.width));
      const float a = stamp.pixels.at(sr, sc, 3);
      if (a <= 0.0f) {
        continue;
      }
      const Rgb color{stamp.pixels.at(sr, sc, 0), stamp.pixels.at(sr, sc, 1),
                      stamp.pixels.at(sr, sc, 2)};
      blend_pixel(layer, top_left.row + r, top_left.col + c, color, a);
    }
  }
}

GridPos center_of(GridPos top_left, Dims footprint) {
  return {top_left.row + footprint.height / 2, top_left.col + footprint.width / 2};
}

void draw_dashed_line(Image& layer, GridPos from, GridPos to, Rgb color, int on, int off) {
  const int period = std::max(1, on + off);
  cv::LineIterator it(cv::Point(from.col, from.row), cv::Point(to.col, to.row), 8);
  for (int i = 0; i < it.count; ++i, ++it) {
    if (i % period < on) {
      const cv::Point p = it.pos();
      blend_pixel(layer, p.y, p.x, color, 1.0f);
    }
  }
}

bool inside(GridPos top_left, Dims footprint, Dims image) {
  return top_left.row >= 0 && top_left.col >= 0 &&
         top_left.row + footprint.height <= image.height &&
         top_left.col + footprint.width <= image.width;
}

const AnnotationStamp& stamp_at(const StampLibrary& library, AnnotationKind kind, int index) {
  const auto stamps = library.stamps(kind);
  if (index < 0 || static_cast<std::size_t>(index) >= stamps.size()) {
    throw ConfigError("placement references missing " + std::string(to_string(kind)) +
                      " stamp #" + std::to_string(index));
  }
  return stamps[static_cast<std::size_t>(index)];
}

}  // namespace

std::string_view to_string(AnnotationKind kind) { return kKindNames[kind_index(kind)]; }

AnnotationKind parse_annotation_kind(std::string_view name) {
  for (AnnotationKind kind : kAllAnnotationKinds) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw ConfigError("unknown annotation kind '" + std::string(name) +
                    "' (expected body_marker, radial_line or vascular_flow)");
}

void AnnotationStamp::validate() const {
  if (pixels.channels() != 4) {
    throw ConfigError("stamp '" + name + "' is not RGBA");
  }
  if (pixels.dims() != nominal_size || nominal_size.area() == 0) {
    throw ConfigError("stamp '" + name + "' bitmap does not match its nominal size " +
                      to_string(nominal_size));
  }
  bool visible = false;
  for (int r = 0; r < pixels.height() && !visible; ++r) {
    for (int c = 0; c < pixels.width(); ++c) {
      if (pixels.at(r, c, 3) > 0.0f) {
        visible = true;
        break;
      }
    }
  }
  if (!visible) {
    throw ConfigError("stamp '" + name + "' has an all-zero alpha channel");
  }
}

void StampLibrary::add(AnnotationStamp stamp) {
  stamp.validate();
  by_kind_[kind_index(stamp.kind)].push_back(std::move(stamp));
}

std::span<const AnnotationStamp> StampLibrary::stamps(AnnotationKind kind) const {
  return by_kind_[kind_index(kind)];
}

std::size_t StampLibrary::size() const {
  std::size_t n = 0;
  for (const auto& v : by_kind_) {
    n += v.size();
  }
  return n;
}

StampLibrary load_stamp_library(const std::filesystem::path& root,
                                std::span<const AnnotationKind> kinds) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw ConfigError("stamp library directory not found: " + root.string());
  }
  StampLibrary library;
  for (AnnotationKind kind : kinds) {
    if (kind == AnnotationKind::VascularFlow) {
      // Rectangles are procedural; stamps for this kind are optional.
      if (!fs::is_directory(root / to_string(kind))) {
        continue;
      }
    }
    const fs::path dir = root / to_string(kind);
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
          files.push_back(entry.path());
        }
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty() && kind != AnnotationKind::VascularFlow) {
      throw ConfigError("stamp library has no " + std::string(to_string(kind)) + " stamps in " +
                        dir.string());
    }
    for (const auto& file : files) {
      AnnotationStamp stamp;
      stamp.kind = kind;
      stamp.name = file.string();
      stamp.pixels = read_png(file, 4);
      stamp.nominal_size = stamp.pixels.dims();
      library.add(std::move(stamp));
    }
  }
  return library;
}

StampLibrary builtin_stamp_library() {
  StampLibrary library;
  for (auto& stamp : builtin_body_markers()) {
    library.add(std::move(stamp));
  }
  library.add(builtin_cross({1.0f, 1.0f, 0.0f}, "cross_yellow"));
  library.add(builtin_cross({0.0f, 1.0f, 0.0f}, "cross_green"));
  return library;
}

void save_stamp_library(const StampLibrary& library, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (AnnotationKind kind : kAllAnnotationKinds) {
    const auto stamps = library.stamps(kind);
    if (stamps.empty()) {
      continue;
    }
    fs::create_directories(root / to_string(kind));
    for (std::size_t i = 0; i < stamps.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%03zu.png", i);
      write_png(root / to_string(kind) / name, stamps[i].pixels);
    }
  }
}

double SynthConfig::max_distance_for(Dims image) const {
  if (radial_max_distance > 0.0) {
    return radial_max_distance;
  }
  return std::min(image.height, image.width) / 2.0;
}

Dims scaled_dims(Dims stamp, double scale) {
  return {std::max(1, static_cast<int>(std::lround(stamp.height * scale))),
          std::max(1, static_cast<int>(std::lround(stamp.width * scale)))};
}

Placement sample_placement(AnnotationKind kind, Dims image, Dims stamp_dims, Rng& rng,
                           const SynthConfig& config) {
  Placement placement;
  placement.kind = kind;

  auto uniform_top_left = [&](Dims footprint) {
    std::uniform_int_distribution<int> row(0, image.height - footprint.height);
    std::uniform_int_distribution<int> col(0, image.width - footprint.width);
    GridPos p;
    p.row = row(rng);
    p.col = col(rng);
    return p;
  };

  switch (kind) {
    case AnnotationKind::BodyMarker: {
      double scale = 1.0;
      if (config.body_marker_max_scale > config.body_marker_min_scale) {
        scale = std::uniform_real_distribution<double>(config.body_marker_min_scale,
                                                       config.body_marker_max_scale)(rng);
      }
      const Dims footprint = scaled_dims(stamp_dims, scale);
      if (footprint.height > image.height || footprint.width > image.width) {
        throw ShapeError("stamp " + to_string(footprint) + " larger than image " +
                         to_string(image));
      }
      PlacedPrimitive p;
      p.top_left = uniform_top_left(footprint);
      p.scale = scale;
      placement.elements.push_back(p);
      break;
    }
    case AnnotationKind::RadialLine: {
      if (stamp_dims.height > image.height || stamp_dims.width > image.width) {
        throw ShapeError("stamp " + to_string(stamp_dims) + " larger than image " +
                         to_string(image));
      }
      const double d_min = config.radial_min_distance;
      const double d_max = config.max_distance_for(image);
      if (d_min > d_max) {
        throw ShapeError("image " + to_string(image) + " too small for radial lines of length >= " +
                         std::to_string(d_min));
      }
      std::discrete_distribution<int> pairs(config.radial_pair_weights.begin(),
                                            config.radial_pair_weights.end());
      const int k = pairs(rng) + 1;
      std::uniform_real_distribution<double> length(d_min, d_max);
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      for (int i = 0; i < k; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
          const GridPos a = uniform_top_left(stamp_dims);
          const double d = length(rng);
          const double t = angle(rng);
          const GridPos b{a.row + static_cast<int>(std::lround(d * std::sin(t))),
                          a.col + static_cast<int>(std::lround(d * std::cos(t)))};
          const double actual = std::hypot(b.row - a.row, b.col - a.col);
          if (!inside(b, stamp_dims, image) || actual < d_min || actual > d_max) {
            continue;
          }
          PlacedPrimitive p;
          p.top_left = a;
          p.partner = b;
          placement.elements.push_back(p);
          placed = true;
        }
        if (!placed) {
          throw ShapeError("could not place a radial line pair in image " + to_string(image));
        }
      }
      break;
    }
    case AnnotationKind::VascularFlow: {
      auto side = [&](int extent) {
        const int lo = std::max(1, static_cast<int>(std::ceil(config.rect_min_fraction * extent)));
        const int hi = std::max(lo, static_cast<int>(std::floor(config.rect_max_fraction * extent)));
        return std::uniform_int_distribution<int>(lo, std::min(hi, extent))(rng);
      };
      if (config.rect_border_widths.empty() || config.rect_palette.empty()) {
        throw ConfigError("vascular flow needs at least one border width and palette color");
      }
      PlacedPrimitive p;
      p.extent = {side(image.height), side(image.width)};
      p.border = config.rect_border_widths[std::uniform_int_distribution<std::size_t>(
          0, config.rect_border_widths.size() - 1)(rng)];
      p.color = config.rect_palette[std::uniform_int_distribution<std::size_t>(
          0, config.rect_palette.size() - 1)(rng)];
      p.top_left = uniform_top_left(p.extent);
      placement.elements.push_back(p);
      break;
    }
  }
  return placement;
}

Placement random_placement(AnnotationKind kind, const StampLibrary& library, Dims image,
                           std::uint64_t seed, const SynthConfig& config) {
  Rng rng(seed);
  int index = 0;
  Dims stamp_dims;
  if (kind != AnnotationKind::VascularFlow) {
    const auto stamps = library.stamps(kind);
    if (stamps.empty()) {
      throw ConfigError("stamp library has no " + std::string(to_string(kind)) + " stamps");
    }
    index = std::uniform_int_distribution<int>(0, static_cast<int>(stamps.size()) - 1)(rng);
    stamp_dims = stamps[static_cast<std::size_t>(index)].nominal_size;
  }
  Placement placement = sample_placement(kind, image, stamp_dims, rng, config);
  for (auto& element : placement.elements) {
    element.stamp_index = index;
  }
  placement.rng_seed = seed;
  return placement;
}

void check_placement(const Placement& placement, const StampLibrary& library, Dims image) {
  for (const auto& e : placement.elements) {
    switch (placement.kind) {
      case AnnotationKind::BodyMarker: {
        const auto& stamp = stamp_at(library, placement.kind, e.stamp_index);
        if (!inside(e.top_left, scaled_dims(stamp.nominal_size, e.scale), image)) {
          throw ShapeError("body marker footprint leaves image " + to_string(image));
        }
        break;
      }
      case AnnotationKind::RadialLine: {
        const auto& stamp = stamp_at(library, placement.kind, e.stamp_index);
        if (!e.partner || !inside(e.top_left, stamp.nominal_size, image) ||
            !inside(*e.partner, stamp.nominal_size, image)) {
          throw ShapeError("radial line endpoint leaves image " + to_string(image));
        }
        break;
      }
      case AnnotationKind::VascularFlow:
        if (e.border < 1 || !inside(e.top_left, e.extent, image)) {
          throw ShapeError("flow rectangle leaves image " + to_string(image));
        }
        break;
    }
  }
}

Overlay render_annotation(const Placement& placement, const StampLibrary& library, Dims image,
                          const SynthConfig& config) {
  check_placement(placement, library, image);
  Overlay overlay{Image(image.height, image.width, 4), BinaryMask(image.height, image.width)};
  Image& layer = overlay.layer;

  for (const auto& e : placement.elements) {
    switch (placement.kind) {
      case AnnotationKind::BodyMarker:
        blend_stamp(layer, stamp_at(library, placement.kind, e.stamp_index), e.top_left, e.scale);
        break;
      case AnnotationKind::RadialLine: {
        const auto& stamp = stamp_at(library, placement.kind, e.stamp_index);
        draw_dashed_line(layer, center_of(e.top_left, stamp.nominal_size),
                         center_of(*e.partner, stamp.nominal_size), dominant_color(stamp),
                         config.dash_on, config.dash_off);
        blend_stamp(layer, stamp, e.top_left, 1.0);
        blend_stamp(layer, stamp, *e.partner, 1.0);
        break;
      }
      case AnnotationKind::VascularFlow:
        for (int r = 0; r < e.extent.height; ++r) {
          for (int c = 0; c < e.extent.width; ++c) {
            const bool edge = r < e.border || c < e.border || r >= e.extent.height - e.border ||
                              c >= e.extent.width - e.border;
            if (edge) {
              blend_pixel(layer, e.top_left.row + r, e.top_left.col + c, e.color, 1.0f);
            }
          }
        }
        break;
    }
  }

  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      overlay.mask.at(r, c) = layer.at(r, c, 3) > 0.0f ? 1 : 0;
    }
  }
  return overlay;
}

Composite composite(const Image& clean, const Overlay& overlay) {
  if (clean.dims() != overlay.layer.dims() || clean.channels() != 3 ||
      overlay.layer.channels() != 4) {
    throw ShapeError("composite: clean " + to_string(clean.dims()) + " does not match overlay " +
                     to_string(overlay.layer.dims()));
  }
  Composite out{clean, overlay.mask};
  for (int r = 0; r < clean.height(); ++r) {
    for (int c = 0; c < clean.width(); ++c) {
      const float a = overlay.layer.at(r, c, 3);
      if (a <= 0.0f) {
        continue;
      }
      for (int ch = 0; ch < 3; ++ch) {
        const float v = overlay.layer.at(r, c, ch) + (1.0f - a) * clean.at(r, c, ch);
        out.noisy.at(r, c, ch) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace annoclean

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annoclean/image.hpp"

namespace annoclean {

using Rng = std::mt19937_64;

enum class AnnotationKind { BodyMarker, RadialLine, VascularFlow };

inline constexpr std::array<AnnotationKind, 3> kAllAnnotationKinds = {
    AnnotationKind::BodyMarker, AnnotationKind::RadialLine, AnnotationKind::VascularFlow};

/// "body_marker", "radial_line", "vascular_flow" (also the stamp subdirectory names).
std::string_view to_string(AnnotationKind kind);
AnnotationKind parse_annotation_kind(std::string_view name);

struct Rgb {
  float r = 0.0f;
  float g = 0.0f;
  float b = 0.0f;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Glyph bitmap: 4 channels, straight (non-premultiplied) color plus alpha, all in [0,1].
struct AnnotationStamp {
  AnnotationKind kind = AnnotationKind::BodyMarker;
  Image pixels;
  Dims nominal_size;
  std::string name;

  /// Throws ConfigError if the stamp is invisible or its bitmap disagrees with nominal_size.
  void validate() const;
};

class StampLibrary {
 public:
  void add(AnnotationStamp stamp);
  std::span<const AnnotationStamp> stamps(AnnotationKind kind) const;
  std::size_t size() const;

 private:
  std::array<std::vector<AnnotationStamp>, 3> by_kind_;
};

/// Reads `<root>/<kind>/*.png` (RGBA, sorted by file name) for every requested kind.
StampLibrary load_stamp_library(const std::filesystem::path& root,
                                std::span<const AnnotationKind> kinds = kAllAnnotationKinds);

/// Procedural fallback glyphs: five body-marker silhouettes and two 11x11 cross markers.
/// Vascular-flow rectangles are rasterized directly and need no stamps.
StampLibrary builtin_stamp_library();

/// Writes a library to the on-disk layout read by load_stamp_library.
void save_stamp_library(const StampLibrary& library, const std::filesystem::path& root);

struct SynthConfig {
  std::array<double, 3> radial_pair_weights = {0.25, 0.5, 0.25};
  double radial_min_distance = 16.0;
  /// 0 means min(H, W) / 2.
  double radial_max_distance = 0.0;
  int dash_on = 3;
  int dash_off = 3;
  double rect_min_fraction = 0.2;
  double rect_max_fraction = 0.6;
  std::vector<int> rect_border_widths = {1, 2, 3};
  std::vector<Rgb> rect_palette = {{1.0f, 1.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.0f, 1.0f, 1.0f}};
  double body_marker_min_scale = 1.0;
  double body_marker_max_scale = 1.0;

  double max_distance_for(Dims image) const;
};

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct PlacedPrimitive {
  GridPos top_left;
  double scale = 1.0;
  int stamp_index = 0;
  /// RadialLine: top-left of the partner cross glyph.
  std::optional<GridPos> partner;
  /// VascularFlow: rectangle extent, border width and color.
  Dims extent;
  int border = 0;
  Rgb color;

  friend bool operator==(const PlacedPrimitive&, const PlacedPrimitive&) = default;
};

struct Placement {
  AnnotationKind kind = AnnotationKind::BodyMarker;
  std::vector<PlacedPrimitive> elements;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const Placement&, const Placement&) = default;
};

/// Premultiplied RGBA layer and its alpha support.
struct Overlay {
  Image layer;
  BinaryMask mask;
};

struct Composite {
  Image noisy;
  BinaryMask mask;
};

/// Scaled glyph footprint, at least 1x1.
Dims scaled_dims(Dims stamp, double scale);

/// Samples positions for one annotation. `stamp_dims` is the glyph size for BodyMarker and
/// RadialLine; it is ignored for VascularFlow. All footprints land fully inside `image`.
Placement sample_placement(AnnotationKind kind, Dims image, Dims stamp_dims, Rng& rng,
                           const SynthConfig& config = {});

/// Picks a stamp of `kind` from the library and samples its placement, all from `seed`.
Placement random_placement(AnnotationKind kind, const StampLibrary& library, Dims image,
                           std::uint64_t seed, const SynthConfig& config = {});

/// Throws ShapeError if any footprint leaves the image.
void check_placement(const Placement& placement, const StampLibrary& library, Dims image);

Overlay render_annotation(const Placement& placement, const StampLibrary& library, Dims image,
                          const SynthConfig& config = {});

/// Source-over blend of the overlay on a 3-channel clean image.
Composite composite(const Image& clean, const Overlay& overlay);

}  // namespace annoclean

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

#include "annoclean/error.hpp"
#include "annoclean/synth.hpp"

namespace annoclean {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("annoclean_synth_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

AnnotationStamp opaque_stamp(int h, int w, AnnotationKind kind = AnnotationKind::BodyMarker) {
  AnnotationStamp s;
  s.kind = kind;
  s.nominal_size = {h, w};
  s.pixels = Image(h, w, 4);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      s.pixels.at(r, c, 0) = 1.0f;
      s.pixels.at(r, c, 3) = 1.0f;
    }
  }
  s.name = "opaque";
  return s;
}

Image gray(int h, int w, float v) { return Image(h, w, 3, v); }

TEST(StampLibrary, LoadsEveryFilePerKind) {
  TempDir dir;
  StampLibrary lib;
  for (int i = 0; i < 5; ++i) {
    AnnotationStamp s = opaque_stamp(8 + i, 9);
    s.name = "marker" + std::to_string(i);
    lib.add(s);
  }
  save_stamp_library(lib, dir.path());
  const std::array<AnnotationKind, 1> kinds = {AnnotationKind::BodyMarker};
  const StampLibrary loaded = load_stamp_library(dir.path(), kinds);
  ASSERT_EQ(loaded.stamps(AnnotationKind::BodyMarker).size(), 5u);
  EXPECT_EQ(loaded.stamps(AnnotationKind::BodyMarker)[2].nominal_size, (Dims{10, 9}));
}

TEST(StampLibrary, MissingDirectoryIsConfigError) {
  EXPECT_THROW(load_stamp_library("/nonexistent/stamps"), ConfigError);
}

TEST(StampLibrary, EmptyKindDirectoryNamesTheKind) {
  TempDir dir;
  fs::create_directories(dir.path() / "radial_line");
  const std::array<AnnotationKind, 1> kinds = {AnnotationKind::RadialLine};
  try {
    load_stamp_library(dir.path(), kinds);
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("radial_line"), std::string::npos) << e.what();
  }
}

TEST(StampLibrary, TransparentStampNamesTheFile) {
  TempDir dir;
  fs::create_directories(dir.path() / "body_marker");
  write_png(dir.path() / "body_marker" / "ghost.png", Image(6, 6, 4, 0.0f));
  const std::array<AnnotationKind, 1> kinds = {AnnotationKind::BodyMarker};
  try {
    load_stamp_library(dir.path(), kinds);
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost.png"), std::string::npos) << e.what();
  }
}

TEST(StampLibrary, BuiltinsAreValid) {
  const StampLibrary lib = builtin_stamp_library();
  EXPECT_EQ(lib.stamps(AnnotationKind::BodyMarker).size(), 5u);
  ASSERT_EQ(lib.stamps(AnnotationKind::RadialLine).size(), 2u);
  EXPECT_EQ(lib.stamps(AnnotationKind::RadialLine)[0].nominal_size, (Dims{11, 11}));
  for (AnnotationKind k : {AnnotationKind::BodyMarker, AnnotationKind::RadialLine}) {
    for (const auto& s : lib.stamps(k)) {
      EXPECT_NO_THROW(s.validate());
    }
  }
}

TEST(SamplePlacement, BodyMarkerCoversFullRange) {
  Rng rng(3);
  int min_r = 1000, max_r = -1, min_c = 1000, max_c = -1;
  for (int i = 0; i < 20000; ++i) {
    const Placement p = sample_placement(AnnotationKind::BodyMarker, {256, 256}, {32, 32}, rng);
    ASSERT_EQ(p.elements.size(), 1u);
    const GridPos tl = p.elements[0].top_left;
    ASSERT_GE(tl.row, 0);
    ASSERT_LE(tl.row, 224);
    ASSERT_GE(tl.col, 0);
    ASSERT_LE(tl.col, 224);
    min_r = std::min(min_r, tl.row);
    max_r = std::max(max_r, tl.row);
    min_c = std::min(min_c, tl.col);
    max_c = std::max(max_c, tl.col);
  }
  EXPECT_EQ(min_r, 0);
  EXPECT_EQ(max_r, 224);
  EXPECT_EQ(min_c, 0);
  EXPECT_EQ(max_c, 224);
}

TEST(SamplePlacement, StampLargerThanImageFails) {
  Rng rng(1);
  EXPECT_ANY_THROW(sample_placement(AnnotationKind::BodyMarker, {16, 16}, {17, 4}, rng));
}

TEST(SamplePlacement, RadialPairCountsFollowWeights) {
  Rng rng(5);
  std::map<std::size_t, int> counts;
  const int n = 40000;
  const SynthConfig cfg;
  for (int i = 0; i < n; ++i) {
    const Placement p = sample_placement(AnnotationKind::RadialLine, {128, 128}, {11, 11}, rng);
    ++counts[p.elements.size()];
    for (const auto& e : p.elements) {
      ASSERT_TRUE(e.partner.has_value());
      const double dr = e.partner->row - e.top_left.row;
      const double dc = e.partner->col - e.top_left.col;
      const double d = std::hypot(dr, dc);
      ASSERT_GE(d, cfg.radial_min_distance);
      ASSERT_LE(d, 64.0);
    }
  }
  ASSERT_EQ(counts.size(), 3u);
  EXPECT_NEAR(counts[1] / double(n), 0.25, 0.01);
  EXPECT_NEAR(counts[2] / double(n), 0.50, 0.01);
  EXPECT_NEAR(counts[3] / double(n), 0.25, 0.01);
}

TEST(SamplePlacement, VascularRectangleWithinFractions) {
  Rng rng(9);
  for (int i = 0; i < 2000; ++i) {
    const Placement p = sample_placement(AnnotationKind::VascularFlow, {100, 200}, {}, rng);
    ASSERT_EQ(p.elements.size(), 1u);
    const auto& e = p.elements[0];
    EXPECT_GE(e.extent.height, 20);
    EXPECT_LE(e.extent.height, 60);
    EXPECT_GE(e.extent.width, 40);
    EXPECT_LE(e.extent.width, 120);
    EXPECT_GE(e.border, 1);
    EXPECT_LE(e.border, 3);
    EXPECT_LE(e.top_left.row + e.extent.height, 100);
    EXPECT_LE(e.top_left.col + e.extent.width, 200);
  }
}

TEST(SamplePlacement, SameSeedSamePlacement) {
  const StampLibrary lib = builtin_stamp_library();
  for (AnnotationKind k : kAllAnnotationKinds) {
    EXPECT_EQ(random_placement(k, lib, {96, 128}, 42), random_placement(k, lib, {96, 128}, 42));
  }
}

TEST(Render, BodyMarkerMaskCountsStampSupport) {
  StampLibrary lib;
  AnnotationStamp s = opaque_stamp(32, 32);
  // Punch a transparent hole so the support is not the whole box.
  for (int r = 10; r < 14; ++r) {
    for (int c = 0; c < 32; ++c) {
      s.pixels.at(r, c, 3) = 0.0f;
    }
  }
  lib.add(s);
  Placement p;
  p.kind = AnnotationKind::BodyMarker;
  PlacedPrimitive e;
  e.top_left = {10, 10};
  p.elements.push_back(e);
  const Overlay o = render_annotation(p, lib, {64, 64});
  EXPECT_EQ(o.mask.count(), 32u * 32u - 4u * 32u);
  EXPECT_EQ(o.mask.at(10, 10), 1);
  EXPECT_EQ(o.mask.at(9, 10), 0);
  EXPECT_EQ(o.mask.at(20, 10), 0);
}

TEST(Render, RadialLineHasCrossesAndConnectors) {
  const StampLibrary lib = builtin_stamp_library();
  const AnnotationStamp& cross = lib.stamps(AnnotationKind::RadialLine)[0];
  Placement p;
  p.kind = AnnotationKind::RadialLine;
  for (int row : {10, 60}) {
    PlacedPrimitive e;
    e.stamp_index = 0;
    e.top_left = {row, 5};
    e.partner = GridPos{row, 70};
    p.elements.push_back(e);
  }
  const Overlay o = render_annotation(p, lib, {96, 96});

  auto in_box = [&](int r, int c, GridPos tl) {
    return r >= tl.row && r < tl.row + 11 && c >= tl.col && c < tl.col + 11;
  };
  int cross_pixels = 0;
  std::map<int, int> line_pixels;  // row -> masked pixels outside every box
  for (int r = 0; r < 96; ++r) {
    for (int c = 0; c < 96; ++c) {
      bool boxed = false;
      for (const auto& e : p.elements) {
        for (GridPos tl : {e.top_left, *e.partner}) {
          if (in_box(r, c, tl)) {
            boxed = true;
            if (cross.pixels.at(r - tl.row, c - tl.col, 3) > 0.0f) {
              EXPECT_EQ(o.mask.at(r, c), 1);
              ++cross_pixels;
            }
          }
        }
      }
      if (!boxed && o.mask.at(r, c)) {
        ++line_pixels[r];
      }
    }
  }
  EXPECT_GT(cross_pixels, 0);
  // Dashes connect the centers along each pair's row, and nowhere else.
  ASSERT_EQ(line_pixels.size(), 2u);
  EXPECT_GT(line_pixels[15], 0);
  EXPECT_GT(line_pixels[65], 0);
  // Dashed: some gaps remain between the boxes.
  EXPECT_LT(line_pixels[15], 70 - 16);
}

TEST(Render, VascularBorderPixelCount) {
  const StampLibrary lib = builtin_stamp_library();
  Placement p;
  p.kind = AnnotationKind::VascularFlow;
  PlacedPrimitive e;
  e.top_left = {5, 7};
  e.extent = {100, 80};
  e.border = 2;
  e.color = {1.0f, 1.0f, 0.0f};
  p.elements.push_back(e);
  const Overlay o = render_annotation(p, lib, {128, 128});
  // Independent count: cells of the bounding box minus its interior.
  const std::size_t expected = 100u * 80u - (100u - 4u) * (80u - 4u);
  EXPECT_EQ(expected, 704u);
  EXPECT_EQ(o.mask.count(), expected);
  EXPECT_EQ(o.mask.count(), 2u * (100 * 2 + 80 * 2) - 4u * (2 * 2));
}

TEST(Render, ExtremePlacementsStayInBounds) {
  const StampLibrary lib = builtin_stamp_library();
  for (AnnotationKind k : kAllAnnotationKinds) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const Placement p = random_placement(k, lib, {48, 40}, seed);
      EXPECT_NO_THROW(check_placement(p, lib, {48, 40}));
      const Overlay o = render_annotation(p, lib, {48, 40});
      EXPECT_EQ(o.mask.dims(), (Dims{48, 40}));
    }
  }
  // Corner placement built by hand.
  Placement p;
  p.kind = AnnotationKind::BodyMarker;
  PlacedPrimitive e;
  e.top_left = {48 - 20, 40 - 20};
  p.elements.push_back(e);
  const Overlay o = render_annotation(p, lib, {48, 40});
  EXPECT_GT(o.mask.count(), 0u);
  e.top_left = {48 - 19, 0};
  p.elements[0] = e;
  EXPECT_THROW(check_placement(p, lib, {48, 40}), ShapeError);
}

TEST(Render, MaskEqualsAlphaSupport) {
  const StampLibrary lib = builtin_stamp_library();
  for (AnnotationKind k : kAllAnnotationKinds) {
    const Overlay o = render_annotation(random_placement(k, lib, {64, 64}, 17), lib, {64, 64});
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        EXPECT_EQ(o.mask.at(r, c) == 1, o.layer.at(r, c, 3) > 0.0f);
      }
    }
  }
}

Overlay single_pixel_overlay(int h, int w, float alpha, Rgb color) {
  Overlay o{Image(h, w, 4), BinaryMask(h, w)};
  o.layer.at(1, 1, 0) = alpha * color.r;
  o.layer.at(1, 1, 1) = alpha * color.g;
  o.layer.at(1, 1, 2) = alpha * color.b;
  o.layer.at(1, 1, 3) = alpha;
  o.mask.at(1, 1) = alpha > 0.0f ? 1 : 0;
  return o;
}

TEST(Composite, ZeroAlphaIsIdentity) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image clean(8, 8, 3);
  for (float& v : clean.data()) {
    v = u(rng);
  }
  const Overlay o{Image(8, 8, 4), BinaryMask(8, 8)};
  const Composite c = composite(clean, o);
  EXPECT_EQ(c.noisy, clean);
  EXPECT_EQ(c.mask.count(), 0u);
}

TEST(Composite, OpaqueReplacesClean) {
  const Composite c = composite(gray(4, 4, 0.2f), single_pixel_overlay(4, 4, 1.0f, {1, 1, 1}));
  EXPECT_FLOAT_EQ(c.noisy.at(1, 1, 0), 1.0f);
  EXPECT_FLOAT_EQ(c.noisy.at(0, 0, 0), 0.2f);
}

TEST(Composite, HalfAlphaBlends) {
  const Composite c = composite(gray(4, 4, 0.2f), single_pixel_overlay(4, 4, 0.5f, {1, 1, 1}));
  // 0.5 * 1.0 + 0.5 * 0.2
  EXPECT_NEAR(c.noisy.at(1, 1, 1), 0.6f, 1e-7);
}

TEST(Composite, DimensionMismatchThrows) {
  EXPECT_THROW(composite(gray(4, 4, 0.2f), single_pixel_overlay(5, 4, 1.0f, {1, 1, 1})),
               ShapeError);
}

TEST(Composite, SupportSoundnessAndRange) {
  const StampLibrary lib = builtin_stamp_library();
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (AnnotationKind k : kAllAnnotationKinds) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Image clean(48, 48, 3);
      for (float& v : clean.data()) {
        v = u(rng);
      }
      const Overlay o = render_annotation(random_placement(k, lib, {48, 48}, seed), lib, {48, 48});
      const Composite c = composite(clean, o);
      for (int r = 0; r < 48; ++r) {
        for (int col = 0; col < 48; ++col) {
          bool changed = false;
          bool differs = false;
          for (int ch = 0; ch < 3; ++ch) {
            const float v = c.noisy.at(r, col, ch);
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
            changed = changed || v != clean.at(r, col, ch);
            const float a = o.layer.at(r, col, 3);
            if (a == 1.0f) {
              differs = differs || o.layer.at(r, col, ch) != clean.at(r, col, ch);
            }
          }
          if (changed) {
            EXPECT_EQ(c.mask.at(r, col), 1);
          }
          if (c.mask.at(r, col) && differs) {
            EXPECT_TRUE(changed);
          }
        }
      }
    }
  }
}

TEST(Composite, DeterministicForSeed) {
  const StampLibrary lib = builtin_stamp_library();
  const Image clean = gray(64, 64, 0.3f);
  for (AnnotationKind k : kAllAnnotationKinds) {
    const Overlay a = render_annotation(random_placement(k, lib, {64, 64}, 99), lib, {64, 64});
    const Overlay b = render_annotation(random_placement(k, lib, {64, 64}, 99), lib, {64, 64});
    EXPECT_EQ(a.layer, b.layer);
    EXPECT_EQ(composite(clean, a).noisy, composite(clean, b).noisy);
  }
}

}  // namespace
}  // namespace annoclean

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "annoclean/error.hpp"
#include "annoclean/metrics.hpp"
#include "support/oracles.hpp"

namespace annoclean {
namespace {

BinaryMask mask_from(int h, int w, std::initializer_list<std::pair<int, int>> on) {
  BinaryMask m(h, w);
  for (auto [r, c] : on) {
    m.at(r, c) = 1;
  }
  return m;
}

using oracle::brute_force_ssim;
using oracle::random_image;
using oracle::random_mask;

// ---------------------------------------------------------------- segmentation

TEST(ExtractSegmentation, IdenticalImagesGiveEmptyMask) {
  std::mt19937_64 rng(1);
  const Image a = random_image(8, 8, rng);
  EXPECT_EQ(extract_segmentation(a, a).count(), 0u);
}

TEST(ExtractSegmentation, SinglePixelAboveThreshold) {
  Image a(8, 8, 3, 0.5f);
  Image b = a;
  b.at(3, 4, 1) += 10.0f / 255.0f;
  const BinaryMask m = extract_segmentation(a, b, 2.0 / 255.0);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_EQ(m.at(3, 4), 1);
}

TEST(ExtractSegmentation, UniformSmallDifference) {
  // Differences built from 8-bit codes, as they occur between decoded PNGs.
  Image a(6, 6, 3, 100.0f / 255.0f);
  Image b(6, 6, 3, 101.0f / 255.0f);
  EXPECT_EQ(extract_segmentation(a, b, 2.0 / 255.0).count(), 0u);
  EXPECT_EQ(extract_segmentation(a, b, 0.5 / 255.0).count(), 36u);
  EXPECT_EQ(extract_segmentation(a, b, 1.0 / 255.0).count(), 36u);
}

TEST(ExtractSegmentation, MonotoneInThreshold) {
  std::mt19937_64 rng(2);
  const Image a = random_image(16, 16, rng);
  const Image b = random_image(16, 16, rng);
  for (double t1 : {0.01, 0.1, 0.3}) {
    for (double t2 : {0.01, 0.1, 0.3, 0.6}) {
      if (t1 > t2) {
        continue;
      }
      const BinaryMask m1 = extract_segmentation(a, b, t1);
      const BinaryMask m2 = extract_segmentation(a, b, t2);
      for (std::size_t i = 0; i < m1.data().size(); ++i) {
        EXPECT_LE(m2.data()[i], m1.data()[i]);
      }
    }
  }
}

TEST(ExtractSegmentation, DimensionMismatchThrows) {
  EXPECT_THROW(extract_segmentation(Image(4, 4, 3), Image(4, 5, 3)), ShapeError);
}

// ---------------------------------------------------------------- overlap scores

TEST(Overlap, HandExamples) {
  const BinaryMask p = mask_from(1, 3, {{0, 0}, {0, 1}});
  const BinaryMask t = mask_from(1, 3, {{0, 1}, {0, 2}});
  EXPECT_DOUBLE_EQ(dice(p, t), 0.5);
  EXPECT_DOUBLE_EQ(iou(p, t), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(dice(p, p), 1.0);
  EXPECT_DOUBLE_EQ(iou(t, t), 1.0);
  const BinaryMask q = mask_from(1, 3, {{0, 2}});
  EXPECT_DOUBLE_EQ(dice(mask_from(1, 3, {{0, 0}}), q), 0.0);
  EXPECT_DOUBLE_EQ(iou(mask_from(1, 3, {{0, 0}}), q), 0.0);
}

TEST(Overlap, EmptyConventions) {
  const BinaryMask empty(4, 4);
  const BinaryMask one = mask_from(4, 4, {{1, 1}});
  EXPECT_DOUBLE_EQ(dice(empty, empty), 1.0);
  EXPECT_DOUBLE_EQ(iou(empty, empty), 1.0);
  EXPECT_DOUBLE_EQ(dice(empty, one), 0.0);
  EXPECT_DOUBLE_EQ(iou(one, empty), 0.0);
}

TEST(PixelAccuracy, Examples) {
  const BinaryMask a = mask_from(4, 4, {{0, 0}, {2, 3}});
  BinaryMask b = a;
  EXPECT_DOUBLE_EQ(pixel_accuracy(a, b), 1.0);
  b.at(1, 1) = 1;
  EXPECT_DOUBLE_EQ(pixel_accuracy(a, b), 15.0 / 16.0);
  EXPECT_DOUBLE_EQ(pixel_accuracy(BinaryMask(4, 4, 1), BinaryMask(4, 4, 0)), 0.0);
}

TEST(Overlap, DimensionMismatchThrows) {
  EXPECT_THROW(dice(BinaryMask(3, 3), BinaryMask(3, 4)), ShapeError);
  EXPECT_THROW(iou(BinaryMask(3, 3), BinaryMask(4, 3)), ShapeError);
  EXPECT_THROW(pixel_accuracy(BinaryMask(3, 3), BinaryMask(4, 3)), ShapeError);
}

TEST(Overlap, RandomMasksMatchSetCounting) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const BinaryMask p = random_mask(16, 16, rng, 0.3);
    const BinaryMask t = random_mask(16, 16, rng, 0.3);
    const oracle::SetCounts n = oracle::count_sets(p, t);
    EXPECT_EQ(dice(p, t), n.dice());
    EXPECT_EQ(iou(p, t), n.iou());
    EXPECT_EQ(pixel_accuracy(p, t), n.pixel_accuracy());
    const double j = iou(p, t);
    EXPECT_NEAR(dice(p, t), 2 * j / (1 + j), 1e-12);
    // Symmetry.
    EXPECT_EQ(dice(p, t), dice(t, p));
    EXPECT_EQ(iou(p, t), iou(t, p));
    EXPECT_EQ(pixel_accuracy(p, t), pixel_accuracy(t, p));
  }
}

// ---------------------------------------------------------------- SSIM

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(4);
  const Image a = random_image(20, 24, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, BlackVersusWhiteClosedForm) {
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(Image(16, 16, 3, 0.0f), Image(16, 16, 3, 1.0f)), c1 / (1 + c1), 1e-12);
}

TEST(Ssim, MatchesBruteForceWindows) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Image a = random_image(16, 16, rng);
    const Image b = random_image(16, 16, rng);
    EXPECT_NEAR(ssim(a, b), brute_force_ssim(a, b), 1e-6);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  }
}

TEST(Ssim, TooSmallThrows) { EXPECT_THROW(ssim(Image(10, 16, 3), Image(10, 16, 3)), ShapeError); }

TEST(GaussianWindow, NormalizedAndSymmetric) {
  const auto w = gaussian_window(11, 1.5);
  double s = 0.0;
  for (double v : w) {
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (int i = 0; i < 11; ++i) {
    EXPECT_DOUBLE_EQ(w[i], w[10 - i]);
  }
}

// ---------------------------------------------------------------- DCT / PSNR-HVS-M

TEST(Dct, RoundTripAndParseval) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-128.0, 128.0);
  for (int trial = 0; trial < 50; ++trial) {
    Block8 x;
    for (double& v : x) {
      v = u(rng);
    }
    const Block8 X = dct8x8(x);
    const Block8 back = idct8x8(X);
    double e_x = 0.0, e_X = 0.0;
    for (int i = 0; i < 64; ++i) {
      EXPECT_NEAR(back[i], x[i], 1e-10);
      e_x += x[i] * x[i];
      e_X += X[i] * X[i];
    }
    EXPECT_NEAR(e_x, e_X, 1e-8 * e_x);
  }
}

TEST(Dct, MatchesDefinition) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  Block8 x;
  for (double& v : x) {
    v = u(rng);
  }
  const Block8 X = dct8x8(x);
  const Block8 ref = oracle::dct_by_definition(x);
  for (int i = 0; i < 64; ++i) {
    EXPECT_NEAR(X[i], ref[i], 1e-9);
  }
}

TEST(PsnrHvsM, IdenticalIsCapped) {
  std::mt19937_64 rng(8);
  const Image a = random_image(32, 32, rng);
  EXPECT_EQ(psnr_hvs_m(a, a), kPsnrCapDb);
}

TEST(PsnrHvsM, DecreasesWithNoiseAmplitude) {
  std::mt19937_64 rng(9);
  const Image a = random_image(64, 64, rng);
  std::uniform_int_distribution<int> sign(0, 1);
  std::vector<int> signs;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    signs.push_back(sign(rng) ? 1 : -1);
  }
  double previous = kPsnrCapDb + 1;
  for (int amp : {2, 4, 8}) {
    Image b = a;
    for (std::size_t i = 0; i < b.data().size(); ++i) {
      b.data()[i] += signs[i] * amp / 255.0f;
    }
    const double score = psnr_hvs_m(a, b);
    EXPECT_LT(score, previous) << "amplitude " << amp;
    previous = score;
  }
}

TEST(PsnrHvsM, DcOnlyDifferenceMatchesSingleTerm) {
  // Four flat 8x8 blocks; one block is shifted by a constant c (in 8-bit units). Flat blocks
  // have no AC energy, the DC term is never masked, so only that block's DC term counts.
  Image a(16, 16, 3, 0.0f);
  const float levels[4] = {40.0f, 90.0f, 130.0f, 200.0f};
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const float v = levels[(r / 8) * 2 + c / 8] / 255.0f;
      for (int ch = 0; ch < 3; ++ch) {
        a.at(r, c, ch) = v;
      }
    }
  }
  const double shift = 3.0;
  Image b = a;
  for (int r = 8; r < 16; ++r) {
    for (int c = 0; c < 8; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        b.at(r, c, ch) += static_cast<float>(shift / 255.0);
      }
    }
  }
  // Shifted block's DC changes by 8·c·(float rounding of the stored values).
  double actual_shift = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double w = ch == 0 ? 0.299 : ch == 1 ? 0.587 : 0.114;
    actual_shift += w * (static_cast<double>(b.at(8, 0, ch)) - a.at(8, 0, ch)) * 255.0;
  }
  const double dc = 8.0 * actual_shift;
  const double csf_dc = 1.608443;
  const double mse = (dc * csf_dc) * (dc * csf_dc) / (4.0 * 64.0);
  const double expected = 10.0 * std::log10(255.0 * 255.0 / mse);
  EXPECT_NEAR(psnr_hvs_m(a, b), expected, 1e-6);
  EXPECT_NEAR(kCsfTable[0], csf_dc, 1e-12);
}

TEST(PsnrHvsM, TooSmallThrows) { EXPECT_THROW(psnr_hvs_m(Image(7, 8, 3), Image(7, 8, 3)), ShapeError); }

TEST(Metrics, PureFunctions) {
  std::mt19937_64 rng(10);
  const Image a = random_image(24, 24, rng);
  const Image b = random_image(24, 24, rng);
  EXPECT_EQ(ssim(a, b), ssim(a, b));
  EXPECT_EQ(psnr_hvs_m(a, b), psnr_hvs_m(a, b));
  EXPECT_EQ(extract_segmentation(a, b), extract_segmentation(a, b));
}

}  // namespace
}  // namespace annoclean

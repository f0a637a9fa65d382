#pragma once

#include <array>
#include <string>
#include <vector>

#include "annoclean/image.hpp"

namespace annoclean {

inline constexpr double kDefaultTau = 2.0 / 255.0;

/// mask(p) = 1 iff max over channels |input(p) − output(p)| >= tau. Both images are in
/// linear [0,1] scale.
BinaryMask extract_segmentation(const Image& input, const Image& output, double tau = kDefaultTau);

/// 2|P∩T| / (|P|+|T|); 1 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& truth);
/// |P∩T| / |P∪T|; 1 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& truth);
/// (TP + TN) / total.
double pixel_accuracy(const BinaryMask& pred, const BinaryMask& truth);

/// Rec.601 luma of a 3-channel image, same scale as the input.
std::vector<double> luma(const Image& image);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM of the luma channels over every fully-inside Gaussian window. Range [-1,1].
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Normalized 1-D Gaussian of the given odd size.
std::vector<double> gaussian_window(int size, double sigma);

// 8x8 orthonormal DCT-II.
using Block8 = std::array<double, 64>;
Block8 dct8x8(const Block8& block);
Block8 idct8x8(const Block8& coeffs);

/// Contrast-sensitivity weights and masking coefficients of PSNR-HVS-M, row-major by
/// (vertical, horizontal) frequency.
extern const Block8 kCsfTable;
extern const Block8 kMaskTable;

inline constexpr double kPsnrCapDb = 100.0;

/// PSNR-HVS-M in dB with `reference` first. Luma is scaled to [0,255] and compared over
/// non-overlapping 8x8 blocks; returns kPsnrCapDb when the masked error is below 1e-10.
double psnr_hvs_m(const Image& reference, const Image& distorted);

}  // namespace annoclean

#include "annoclean/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "annoclean/error.hpp"

namespace annoclean {

// CSF and masking tables from the PSNR-HVS-M reference implementation by N. Ponomarenko
// (psnrhvsm.m, ponomarenko.info/psnrhvsm.htm). Frozen here verbatim.
const Block8 kCsfTable = {
    1.608443, 2.339554, 2.573509, 1.608443, 1.072295, 0.643377, 0.504610, 0.421887,
    2.144591, 2.144591, 1.838221, 1.354478, 0.989811, 0.443708, 0.428918, 0.467911,
    1.838221, 1.979095, 1.608443, 1.072295, 0.643377, 0.451493, 0.372972, 0.459555,
    1.838221, 1.513829, 1.169777, 0.887417, 0.504610, 0.295806, 0.321689, 0.415082,
    1.429727, 1.169777, 0.695543, 0.459555, 0.378457, 0.236102, 0.249855, 0.334222,
    1.072295, 0.735288, 0.467911, 0.402111, 0.317717, 0.247453, 0.227744, 0.279729,
    0.525206, 0.402111, 0.329937, 0.295806, 0.249855, 0.212687, 0.214459, 0.254803,
    0.357432, 0.279729, 0.270896, 0.262603, 0.229778, 0.257351, 0.249855, 0.259950};

const Block8 kMaskTable = {
    0.390625, 0.826446, 1.000000, 0.390625, 0.173611, 0.062500, 0.048225, 0.038447,
    0.694444, 0.694444, 0.510204, 0.277008, 0.147929, 0.029727, 0.027778, 0.033058,
    0.510204, 0.591716, 0.390625, 0.173611, 0.062500, 0.030779, 0.021004, 0.031888,
    0.510204, 0.346021, 0.206612, 0.118906, 0.048225, 0.016644, 0.018904, 0.026913,
    0.308642, 0.206612, 0.073046, 0.031888, 0.021626, 0.008403, 0.009426, 0.016452,
    0.173611, 0.081633, 0.033058, 0.024414, 0.015242, 0.009246, 0.007831, 0.011891,
    0.041649, 0.024414, 0.016644, 0.013223, 0.009426, 0.006830, 0.006944, 0.009803,
    0.019290, 0.011891, 0.011000, 0.010406, 0.008000, 0.009803, 0.009426, 0.010000};

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": mask dims " + to_string(a.dims()) + " vs " +
                     to_string(b.dims()));
  }
}

void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (a.dims() != b.dims() || a.channels() != b.channels()) {
    throw ShapeError(std::string(what) + ": image dims " + to_string(a.dims()) + " vs " +
                     to_string(b.dims()));
  }
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  Counts c;
  const auto p = pred.data();
  const auto t = truth.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && t[i]) {
      ++c.tp;
    } else if (p[i]) {
      ++c.fp;
    } else if (t[i]) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> m{};
    for (int u = 0; u < 8; ++u) {
      const double scale = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        m[u * 8 + x] = scale * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return m;
  }();
  return basis;
}

// Sum of squared deviations (sample variance times count) over a sub-block.
double scaled_variance(const Block8& b, int r0, int c0, int size) {
  double sum = 0.0;
  for (int r = r0; r < r0 + size; ++r) {
    for (int c = c0; c < c0 + size; ++c) {
      sum += b[r * 8 + c];
    }
  }
  const int n = size * size;
  const double mean = sum / n;
  double sq = 0.0;
  for (int r = r0; r < r0 + size; ++r) {
    for (int c = c0; c < c0 + size; ++c) {
      const double d = b[r * 8 + c] - mean;
      sq += d * d;
    }
  }
  return sq / (n - 1) * n;
}

// Masking strength of a block from its AC energy and local activity.
double masking_effect(const Block8& block, const Block8& coeffs) {
  double energy = 0.0;
  for (int i = 1; i < 64; ++i) {
    energy += coeffs[i] * coeffs[i] * kMaskTable[i];
  }
  double activity = scaled_variance(block, 0, 0, 8);
  if (activity != 0.0) {
    activity = (scaled_variance(block, 0, 0, 4) + scaled_variance(block, 0, 4, 4) +
                scaled_variance(block, 4, 4, 4) + scaled_variance(block, 4, 0, 4)) /
               activity;
  }
  return std::sqrt(energy * activity) / 32.0;
}

}  // namespace

BinaryMask extract_segmentation(const Image& input, const Image& output, double tau) {
  require_same_dims(input, output, "extract_segmentation");
  // Tolerate float rounding of 8-bit codes so a k/255 step counts as exactly k levels.
  const double threshold = tau - 1e-7;
  BinaryMask mask(input.height(), input.width());
  for (int r = 0; r < input.height(); ++r) {
    for (int c = 0; c < input.width(); ++c) {
      double diff = 0.0;
      for (int ch = 0; ch < input.channels(); ++ch) {
        diff = std::max(diff, std::abs(static_cast<double>(input.at(r, c, ch)) - output.at(r, c, ch)));
      }
      mask.at(r, c) = diff >= threshold ? 1 : 0;
    }
  }
  return mask;
}

double dice(const BinaryMask& pred, const BinaryMask& truth) {
  require_same_dims(pred, truth, "dice");
  const Counts c = confusion(pred, truth);
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou(const BinaryMask& pred, const BinaryMask& truth) {
  require_same_dims(pred, truth, "iou");
  const Counts c = confusion(pred, truth);
  const std::size_t uni = c.tp + c.fp + c.fn;
  return uni == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(uni);
}

double pixel_accuracy(const BinaryMask& pred, const BinaryMask& truth) {
  require_same_dims(pred, truth, "pixel_accuracy");
  const Counts c = confusion(pred, truth);
  const std::size_t total = c.tp + c.fp + c.fn + c.tn;
  return total == 0 ? 1.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

std::vector<double> luma(const Image& image) {
  if (image.channels() != 3) {
    throw ShapeError("luma expects a 3-channel image");
  }
  std::vector<double> y(image.dims().area());
  const auto px = image.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  }
  return y;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) {
    v /= sum;
  }
  return w;
}

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  require_same_dims(a, b, "ssim");
  const int H = a.height();
  const int W = a.width();
  const int k = p.window;
  if (H < k || W < k) {
    throw ShapeError("ssim needs images of at least " + std::to_string(k) + "x" +
                     std::to_string(k) + ", got " + to_string(a.dims()));
  }
  const std::vector<double> ya = luma(a);
  const std::vector<double> yb = luma(b);
  const std::vector<double> g = gaussian_window(k, p.sigma);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

  // Separable filtering of the five moment maps, keeping only fully-inside windows.
  const int ho = H - k + 1;
  const int wo = W - k + 1;
  std::array<std::vector<double>, 5> rows;
  for (auto& r : rows) {
    r.assign(static_cast<std::size_t>(H) * wo, 0.0);
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < wo; ++x) {
      double s[5] = {};
      for (int t = 0; t < k; ++t) {
        const double va = ya[y * W + x + t];
        const double vb = yb[y * W + x + t];
        s[0] += g[t] * va;
        s[1] += g[t] * vb;
        s[2] += g[t] * va * va;
        s[3] += g[t] * vb * vb;
        s[4] += g[t] * va * vb;
      }
      for (int m = 0; m < 5; ++m) {
        rows[m][y * wo + x] = s[m];
      }
    }
  }
  double total = 0.0;
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      double s[5] = {};
      for (int t = 0; t < k; ++t) {
        for (int m = 0; m < 5; ++m) {
          s[m] += g[t] * rows[m][(y + t) * wo + x];
        }
      }
      const double mu_a = s[0];
      const double mu_b = s[1];
      const double var_a = s[2] - mu_a * mu_a;
      const double var_b = s[3] - mu_b * mu_b;
      const double cov = s[4] - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return total / (static_cast<double>(ho) * wo);
}

Block8 dct8x8(const Block8& block) {
  const auto& m = dct_basis();
  Block8 tmp{}, out{};
  for (int u = 0; u < 8; ++u) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) {
        s += m[u * 8 + y] * block[y * 8 + x];
      }
      tmp[u * 8 + x] = s;
    }
  }
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) {
        s += tmp[u * 8 + x] * m[v * 8 + x];
      }
      out[u * 8 + v] = s;
    }
  }
  return out;
}

Block8 idct8x8(const Block8& coeffs) {
  const auto& m = dct_basis();
  Block8 tmp{}, out{};
  for (int y = 0; y < 8; ++y) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) {
        s += m[u * 8 + y] * coeffs[u * 8 + v];
      }
      tmp[y * 8 + v] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) {
        s += tmp[y * 8 + v] * m[v * 8 + x];
      }
      out[y * 8 + x] = s;
    }
  }
  return out;
}

double psnr_hvs_m(const Image& reference, const Image& distorted) {
  require_same_dims(reference, distorted, "psnr_hvs_m");
  const int H = reference.height();
  const int W = reference.width();
  if (H < 8 || W < 8) {
    throw ShapeError("psnr_hvs_m needs images of at least 8x8, got " + to_string(reference.dims()));
  }
  std::vector<double> ya = luma(reference);
  std::vector<double> yb = luma(distorted);
  for (double& v : ya) v *= 255.0;
  for (double& v : yb) v *= 255.0;

  double accum = 0.0;
  std::size_t count = 0;
  for (int by = 0; by + 8 <= H; by += 8) {
    for (int bx = 0; bx + 8 <= W; bx += 8) {
      Block8 a{}, b{};
      for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
          a[r * 8 + c] = ya[(by + r) * W + bx + c];
          b[r * 8 + c] = yb[(by + r) * W + bx + c];
        }
      }
      const Block8 da = dct8x8(a);
      const Block8 db = dct8x8(b);
      const double mask = std::max(masking_effect(a, da), masking_effect(b, db));
      for (int i = 0; i < 64; ++i) {
        double u = std::abs(da[i] - db[i]);
        if (i != 0) {
          const double threshold = mask / kMaskTable[i];
          u = u < threshold ? 0.0 : u - threshold;
        }
        const double weighted = u * kCsfTable[i];
        accum += weighted * weighted;
        ++count;
      }
    }
  }
  const double mse = accum / static_cast<double>(count);
  if (mse < 1e-10) {
    return kPsnrCapDb;
  }
  return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / mse));
}

}  // namespace annoclean

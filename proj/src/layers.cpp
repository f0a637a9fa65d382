#include "annoclean/layers.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include <Eigen/Core>

#include "annoclean/error.hpp"

namespace annoclean {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

int out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Output columns ox whose input column ox*stride - pad + kx lies inside [0, w).
void valid_range(int w, int wo, int k_off, int stride, int pad, int& lo, int& hi) {
  const int shift = pad - k_off;
  lo = shift > 0 ? (shift + stride - 1) / stride : 0;
  hi = w - 1 + shift < 0 ? 0 : std::min(wo, (w - 1 + shift) / stride + 1);
  lo = std::min(lo, hi);
}

// Rows: (channel, ky, kx). Columns: (sample, oy, ox).
void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo, std::vector<float>& col) {
  const Shape4& s = x.shape();
  const std::size_t cols = static_cast<std::size_t>(s.n) * ho * wo;
  col.resize(static_cast<std::size_t>(s.c) * k * k * cols);
  for (int c = 0; c < s.c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        int lo = 0, hi = 0;
        valid_range(s.w, wo, kx, stride, pad, lo, hi);
        float* row = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int n = 0; n < s.n; ++n) {
          const float* src = x.plane(n, c);
          float* dst = row + static_cast<std::size_t>(n) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            float* dst_row = dst + static_cast<std::size_t>(oy) * wo;
            if (iy < 0 || iy >= s.h) {
              std::fill(dst_row, dst_row + wo, 0.0f);
              continue;
            }
            const float* src_row = src + static_cast<std::size_t>(iy) * s.w;
            const int off = kx - pad;
            std::fill(dst_row, dst_row + lo, 0.0f);
            if (stride == 1) {
              std::copy(src_row + lo + off, src_row + hi + off, dst_row + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) {
                dst_row[ox] = src_row[ox * stride + off];
              }
            }
            std::fill(dst_row + hi, dst_row + wo, 0.0f);
          }
        }
      }
    }
  }
}

void col2im(const std::vector<float>& col, int k, int stride, int pad, int ho, int wo, Tensor& dx) {
  const Shape4& s = dx.shape();
  const std::size_t cols = static_cast<std::size_t>(s.n) * ho * wo;
  for (int c = 0; c < s.c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        int lo = 0, hi = 0;
        valid_range(s.w, wo, kx, stride, pad, lo, hi);
        const float* row = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int n = 0; n < s.n; ++n) {
          float* dst = dx.plane(n, c);
          const float* src = row + static_cast<std::size_t>(n) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= s.h) {
              continue;
            }
            float* dst_row = dst + static_cast<std::size_t>(iy) * s.w;
            const float* src_row = src + static_cast<std::size_t>(oy) * wo;
            const int off = kx - pad;
            for (int ox = lo; ox < hi; ++ox) {
              dst_row[ox * stride + off] += src_row[ox];
            }
          }
        }
      }
    }
  }
}

// NCHW <-> (C × N·H·W) channel-major matrix.
void to_channel_major(const Tensor& t, std::vector<float>& m) {
  const Shape4& s = t.shape();
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  m.resize(t.size());
  for (int c = 0; c < s.c; ++c) {
    for (int n = 0; n < s.n; ++n) {
      std::memcpy(m.data() + (static_cast<std::size_t>(c) * s.n + n) * hw, t.plane(n, c),
                  hw * sizeof(float));
    }
  }
}

void from_channel_major(const std::vector<float>& m, Tensor& t) {
  const Shape4& s = t.shape();
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    for (int n = 0; n < s.n; ++n) {
      std::memcpy(t.plane(n, c), m.data() + (static_cast<std::size_t>(c) * s.n + n) * hw,
                  hw * sizeof(float));
    }
  }
}

void check_channels(const Tensor& x, int expected, const std::string& layer) {
  if (x.shape().c != expected) {
    throw ShapeError(layer + ": expected " + std::to_string(expected) + " input channels, got " +
                     std::to_string(x.shape().c));
  }
}

}  // namespace

Parameter::Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                      [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
               int padding)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding) {}

Tensor Conv2d::forward(const Tensor& x, bool keep) {
  check_channels(x, in_, weight.name);
  const Shape4& s = x.shape();
  const int ho = out_extent(s.h, k_, stride_, pad_);
  const int wo = out_extent(s.w, k_, stride_, pad_);
  const int kdim = in_ * k_ * k_;
  const int cols = s.n * ho * wo;

  std::vector<float> col;
  im2col(x, k_, stride_, pad_, ho, wo, col);
  std::vector<float> out_cm(static_cast<std::size_t>(out_) * cols);
  MatMap y(out_cm.data(), out_, cols);
  y.noalias() = ConstMatMap(weight.value.data(), out_, kdim) * ConstMatMap(col.data(), kdim, cols);
  for (int o = 0; o < out_; ++o) {
    y.row(o).array() += bias.value[static_cast<std::size_t>(o)];
  }
  Tensor out({s.n, out_, ho, wo});
  from_channel_major(out_cm, out);
  if (keep) {
    input_shape_ = s;
    col_ = std::move(col);
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Shape4& s = input_shape_;
  const Shape4& g = grad_out.shape();
  const int kdim = in_ * k_ * k_;
  const int cols = g.n * g.h * g.w;

  std::vector<float> dy;
  to_channel_major(grad_out, dy);
  ConstMatMap dy_mat(dy.data(), out_, cols);
  std::vector<float>& col = col_;
  ConstMatMap col_mat(col.data(), kdim, cols);

  MatMap(weight.grad.data(), out_, kdim).noalias() += dy_mat * col_mat.transpose();
  // Fixed summation order; a vectorized row sum depends on buffer alignment.
  for (int o = 0; o < out_; ++o) {
    const float* row = dy.data() + static_cast<std::size_t>(o) * cols;
    double acc = 0.0;
    for (int i = 0; i < cols; ++i) {
      acc += row[i];
    }
    bias.grad[static_cast<std::size_t>(o)] += static_cast<float>(acc);
  }

  // Reuse the column buffer for the input gradient.
  MatMap(col.data(), kdim, cols).noalias() =
      ConstMatMap(weight.value.data(), out_, kdim).transpose() * dy_mat;
  Tensor dx(s);
  col2im(col, k_, stride_, pad_, g.h, g.w, dx);
  return dx;
}

ConvTranspose2x2::ConvTranspose2x2(const std::string& name, int in_channels, int out_channels)
    : weight(name + ".weight", {in_channels, out_channels, 2, 2}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels) {}

Tensor ConvTranspose2x2::forward(const Tensor& x, bool keep) {
  check_channels(x, in_, weight.name);
  const Shape4& s = x.shape();
  const int hw = s.h * s.w;
  const int cols = s.n * hw;

  std::vector<float> xm;
  to_channel_major(x, xm);
  std::vector<float> ycols(static_cast<std::size_t>(out_) * 4 * cols);
  MatMap(ycols.data(), out_ * 4, cols).noalias() =
      ConstMatMap(weight.value.data(), in_, out_ * 4).transpose() *
      ConstMatMap(xm.data(), in_, cols);

  Tensor out({s.n, out_, 2 * s.h, 2 * s.w});
  for (int o = 0; o < out_; ++o) {
    const float b = bias.value[static_cast<std::size_t>(o)];
    for (int a = 0; a < 2; ++a) {
      for (int bb = 0; bb < 2; ++bb) {
        const float* src = ycols.data() + static_cast<std::size_t>(o * 4 + a * 2 + bb) * cols;
        for (int n = 0; n < s.n; ++n) {
          float* dst = out.plane(n, o);
          for (int i = 0; i < s.h; ++i) {
            for (int j = 0; j < s.w; ++j) {
              dst[(2 * i + a) * (2 * s.w) + 2 * j + bb] = src[n * hw + i * s.w + j] + b;
            }
          }
        }
      }
    }
  }
  if (keep) {
    input_ = x;
  }
  return out;
}

Tensor ConvTranspose2x2::backward(const Tensor& grad_out) {
  const Shape4& s = input_.shape();
  const int hw = s.h * s.w;
  const int cols = s.n * hw;

  std::vector<float> dycols(static_cast<std::size_t>(out_) * 4 * cols);
  for (int o = 0; o < out_; ++o) {
    float bsum = 0.0f;
    for (int a = 0; a < 2; ++a) {
      for (int bb = 0; bb < 2; ++bb) {
        float* dst = dycols.data() + static_cast<std::size_t>(o * 4 + a * 2 + bb) * cols;
        for (int n = 0; n < s.n; ++n) {
          const float* src = grad_out.plane(n, o);
          for (int i = 0; i < s.h; ++i) {
            for (int j = 0; j < s.w; ++j) {
              const float v = src[(2 * i + a) * (2 * s.w) + 2 * j + bb];
              dst[n * hw + i * s.w + j] = v;
              bsum += v;
            }
          }
        }
      }
    }
    bias.grad[static_cast<std::size_t>(o)] += bsum;
  }

  std::vector<float> xm;
  to_channel_major(input_, xm);
  ConstMatMap dy(dycols.data(), out_ * 4, cols);
  MatMap(weight.grad.data(), in_, out_ * 4).noalias() +=
      ConstMatMap(xm.data(), in_, cols) * dy.transpose();

  std::vector<float> dxm(static_cast<std::size_t>(in_) * cols);
  MatMap(dxm.data(), in_, cols).noalias() = ConstMatMap(weight.value.data(), in_, out_ * 4) * dy;
  Tensor dx(s);
  from_channel_major(dxm, dx);
  return dx;
}

Tensor LeakyRelu::forward(Tensor x, bool keep) {
  auto v = x.data();
  if (keep) {
    positive_.resize(v.size());
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool pos = v[i] > 0.0f;
    if (!pos) {
      v[i] *= slope_;
    }
    if (keep) {
      positive_[i] = pos ? 1 : 0;
    }
  }
  return x;
}

Tensor LeakyRelu::backward(Tensor grad_out) const {
  auto g = grad_out.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!positive_[i]) {
      g[i] *= slope_;
    }
  }
  return grad_out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape4& sa = a.shape();
  const Shape4& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat: " + to_string(sa) + " vs " + to_string(sb));
  }
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t hw = static_cast<std::size_t>(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n) {
    std::memcpy(out.plane(n, 0), a.plane(n, 0), hw * sa.c * sizeof(float));
    std::memcpy(out.plane(n, sa.c), b.plane(n, 0), hw * sb.c * sizeof(float));
  }
  return out;
}

void split_channels(const Tensor& joined, int channels_a, Tensor& a, Tensor& b) {
  const Shape4& s = joined.shape();
  a = Tensor({s.n, channels_a, s.h, s.w});
  b = Tensor({s.n, s.c - channels_a, s.h, s.w});
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    std::memcpy(a.plane(n, 0), joined.plane(n, 0), hw * channels_a * sizeof(float));
    std::memcpy(b.plane(n, 0), joined.plane(n, channels_a), hw * (s.c - channels_a) * sizeof(float));
  }
}

}  // namespace annoclean

#pragma once

#include <string>
#include <vector>

#include "annoclean/tensor.hpp"

namespace annoclean {

/// Named weight array with its gradient accumulator.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape);

  std::size_t size() const { return value.size(); }
};

// Layers cache what backward needs when forward runs with `keep = true`.
// backward accumulates into parameter gradients and returns the input gradient.

class Conv2d {
 public:
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int padding);

  Tensor forward(const Tensor& x, bool keep);
  Tensor backward(const Tensor& grad_out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }

  Parameter weight;  // out × in × k × k
  Parameter bias;    // out

 private:
  int in_, out_, k_, stride_, pad_;
  Shape4 input_shape_{};
  std::vector<float> col_;  // im2col of the last training input
};

/// Kernel-2 stride-2 transposed convolution (exact 2× upsampling).
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2(const std::string& name, int in_channels, int out_channels);

  Tensor forward(const Tensor& x, bool keep);
  Tensor backward(const Tensor& grad_out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Parameter weight;  // in × out × 2 × 2
  Parameter bias;    // out

 private:
  int in_, out_;
  Tensor input_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(float slope) : slope_(slope) {}

  Tensor forward(Tensor x, bool keep);
  Tensor backward(Tensor grad_out) const;

 private:
  float slope_;
  std::vector<unsigned char> positive_;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels for gradients: first `channels_a` channels go to `a`.
void split_channels(const Tensor& joined, int channels_a, Tensor& a, Tensor& b);

}  // namespace annoclean

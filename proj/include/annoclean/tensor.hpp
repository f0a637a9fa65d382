#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "annoclean/image.hpp"

namespace annoclean {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// Dense NCHW float tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, float fill = 0.0f) : shape_(shape), data_(shape.size(), fill) {}

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  float* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const float* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape4 shape_;
  std::vector<float> data_;
};

/// Packs 3-channel images (all the same size) into an N×3×H×W batch.
Tensor images_to_batch(std::span<const Image> images);
Tensor image_to_batch(const Image& image);
/// Extracts sample `n` of a batch as an interleaved image.
Image batch_to_image(const Tensor& batch, int n);

}  // namespace annoclean

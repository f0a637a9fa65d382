#include "annoclean/tensor.hpp"

#include "annoclean/error.hpp"

namespace annoclean {

std::string to_string(const Shape4& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

Tensor images_to_batch(std::span<const Image> images) {
  if (images.empty()) {
    throw ShapeError("cannot batch zero images");
  }
  const Dims d = images.front().dims();
  const int ch = images.front().channels();
  Tensor t({static_cast<int>(images.size()), ch, d.height, d.width});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.dims() != d || img.channels() != ch) {
      throw ShapeError("batch images differ in size: " + to_string(img.dims()) + " vs " +
                       to_string(d));
    }
    for (int c = 0; c < ch; ++c) {
      float* dst = t.plane(static_cast<int>(n), c);
      for (int r = 0; r < d.height; ++r) {
        for (int col = 0; col < d.width; ++col) {
          dst[r * d.width + col] = img.at(r, col, c);
        }
      }
    }
  }
  return t;
}

Tensor image_to_batch(const Image& image) { return images_to_batch(std::span(&image, 1)); }

Image batch_to_image(const Tensor& batch, int n) {
  const Shape4& s = batch.shape();
  Image img(s.h, s.w, s.c);
  for (int c = 0; c < s.c; ++c) {
    const float* src = batch.plane(n, c);
    for (int r = 0; r < s.h; ++r) {
      for (int col = 0; col < s.w; ++col) {
        img.at(r, col, c) = src[r * s.w + col];
      }
    }
  }
  return img;
}

}  // namespace annoclean

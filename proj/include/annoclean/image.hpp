#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace annoclean {

struct Dims {
  int height = 0;
  int width = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
  std::size_t area() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
};

std::string to_string(const Dims& dims);

/// Interleaved float image (row-major, channel-last). Color values live in [0,1],
/// the linear image of 8-bit sRGB codes v/255.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Dims dims() const { return {height_, width_}; }
  bool empty() const { return data_.empty(); }

  float& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// H×W mask with values strictly in {0,1}.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  Dims dims() const { return {height_, width_}; }

  std::uint8_t& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  std::uint8_t at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<std::uint8_t> data() { return data_; }
  std::span<const std::uint8_t> data() const { return data_; }

  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// PNG I/O. Color images are 8-bit sRGB (alpha kept when present and requested),
// masks are 8-bit grayscale with values {0,255}.

/// Reads a PNG as RGB (3 channels) or RGBA (4 channels) in [0,1].
Image read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Image& image);

BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

/// Maps [0,1] to the nearest 8-bit code.
std::uint8_t to_byte(float value);

}  // namespace annoclean

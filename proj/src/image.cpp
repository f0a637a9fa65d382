#include "annoclean/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "annoclean/error.hpp"

namespace annoclean {

std::string to_string(const Dims& dims) {
  return std::to_string(dims.height) + "x" + std::to_string(dims.width);
}

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ShapeError("negative image dimensions");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) {
    throw ShapeError("negative mask dimensions");
  }
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

std::uint8_t to_byte(float value) {
  const float clamped = std::clamp(value, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

Image read_png(const std::filesystem::path& path, int channels) {
  if (channels != 3 && channels != 4) {
    throw ShapeError("read_png supports 3 or 4 channels");
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) {
    throw ConfigError("cannot read image: " + path.string());
  }
  if (raw.depth() != CV_8U) {
    throw ConfigError("expected 8-bit image: " + path.string());
  }
  cv::Mat rgb;
  switch (raw.channels()) {
    case 1:
      cv::cvtColor(raw, rgb, channels == 4 ? cv::COLOR_GRAY2RGBA : cv::COLOR_GRAY2RGB);
      break;
    case 3:
      cv::cvtColor(raw, rgb, channels == 4 ? cv::COLOR_BGR2RGBA : cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(raw, rgb, channels == 4 ? cv::COLOR_BGRA2RGBA : cv::COLOR_BGRA2RGB);
      break;
    default:
      throw ConfigError("unsupported channel count in " + path.string());
  }
  Image out(rgb.rows, rgb.cols, channels);
  for (int r = 0; r < rgb.rows; ++r) {
    const std::uint8_t* row = rgb.ptr<std::uint8_t>(r);
    for (int c = 0; c < rgb.cols * channels; ++c) {
      out.data()[static_cast<std::size_t>(r) * rgb.cols * channels + c] = row[c] / 255.0f;
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  const int ch = image.channels();
  if (ch != 1 && ch != 3 && ch != 4) {
    throw ShapeError("write_png supports 1, 3 or 4 channels");
  }
  cv::Mat mat(image.height(), image.width(), CV_8UC(ch));
  for (int r = 0; r < image.height(); ++r) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(r);
    for (int c = 0; c < image.width() * ch; ++c) {
      row[c] = to_byte(image.data()[static_cast<std::size_t>(r) * image.width() * ch + c]);
    }
  }
  if (ch == 3) {
    cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
  } else if (ch == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_RGBA2BGRA);
  }
  if (!cv::imwrite(path.string(), mat)) {
    throw Error("cannot write image: " + path.string());
  }
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) {
    throw ConfigError("cannot read mask: " + path.string());
  }
  BinaryMask mask(raw.rows, raw.cols);
  for (int r = 0; r < raw.rows; ++r) {
    const std::uint8_t* row = raw.ptr<std::uint8_t>(r);
    for (int c = 0; c < raw.cols; ++c) {
      mask.at(r, c) = row[c] >= 128 ? 1 : 0;
    }
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < mask.height(); ++r) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width(); ++c) {
      row[c] = mask.at(r, c) ? 255 : 0;
    }
  }
  if (!cv::imwrite(path.string(), mat)) {
    throw Error("cannot write mask: " + path.string());
  }
}

}  // namespace annoclean

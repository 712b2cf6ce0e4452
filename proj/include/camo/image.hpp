#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "camo/error.hpp"

namespace camo {

/// Interleaved image with 1 or 3 channels, intensities in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    check(width > 0 && height > 0, ErrorCode::kDimensionTooSmall,
          "image dimensions must be positive");
    check(channels == 1 || channels == 3, ErrorCode::kInvalidArgument,
          "image must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels,
                 std::clamp(fill, 0.0f, 1.0f));
  }
  ImageBuffer(int width, int height, int channels, std::vector<float> data)
      : ImageBuffer(width, height, channels) {
    check(data.size() == data_.size(), ErrorCode::kDimensionMismatch,
          "image data size does not match its dimensions");
    for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
    data_ = std::move(data);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }

  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  void set(int x, int y, int c, float value) {
    data_[index(x, y, c)] = std::clamp(value, 0.0f, 1.0f);
  }

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Per-pixel boolean map. Used for segmentation masks and validity masks.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height) {
    check(width > 0 && height > 0, ErrorCode::kDimensionTooSmall,
          "mask dimensions must be positive");
    bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  // Out-of-frame reads return `outside`.
  bool at_or(int x, int y, bool outside) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return outside;
    return at(x, y);
  }
  void set(int x, int y, bool value) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
  }
  bool any() const noexcept {
    return std::find(bits_.begin(), bits_.end(), 1) != bits_.end();
  }

  bool same_shape(const BinaryMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

using SegMask = BinaryMask;

/// Dense single-channel real map (motion residuals, fused saliency).
struct ScalarMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ScalarMap() = default;
  ScalarMap(int w, int h, double fill = 0.0)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * h, fill) {}

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

using SaliencyMap = ScalarMap;

enum class Interpolation { kBilinear, kNearest };

/// Image plus the mask of pixels whose sample fell inside the source.
struct WarpResult {
  ImageBuffer image;
  BinaryMask valid;
};

namespace detail {

// Tolerance for treating a sample coordinate as on the border.
inline constexpr double kBorderSlack = 1e-6;

inline bool inside_for_sampling(double x, double y, int width, int height) {
  return x >= -kBorderSlack && y >= -kBorderSlack &&
         x <= (width - 1) + kBorderSlack && y <= (height - 1) + kBorderSlack;
}

// Samples every channel of `img` at (x, y); the caller guarantees the point
// passed inside_for_sampling.
inline void sample_into(const ImageBuffer& img, double x, double y,
                        Interpolation mode, float* out) {
  const int w = img.width();
  const int h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  if (mode == Interpolation::kNearest) {
    const int xi = static_cast<int>(std::lround(x));
    const int yi = static_cast<int>(std::lround(y));
    for (int c = 0; c < img.channels(); ++c) out[c] = img.at(xi, yi, c);
    return;
  }
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bottom =
        (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - fy) * top + fy * bottom);
  }
}

}  // namespace detail

/// Mean over channels, as a single-channel image.
inline ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      float sum = 0.0f;
      for (int c = 0; c < img.channels(); ++c) sum += img.at(x, y, c);
      out.set(x, y, 0, sum / static_cast<float>(img.channels()));
    }
  return out;
}

}  // namespace camo

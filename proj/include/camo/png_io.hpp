#pragma once

// 8-bit PNG export/import via the libpng simplified API.

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "camo/error.hpp"
#include "camo/image.hpp"

namespace camo {

/// [0, 1] -> 0..255, rounding half to even.
inline std::uint8_t to_byte(float v) {
  const double scaled = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
  // nearbyint honours the current rounding mode, which defaults to
  // round-to-nearest-even.
  return static_cast<std::uint8_t>(std::nearbyint(scaled));
}

namespace detail {

inline void write_png_bytes(const std::filesystem::path& path, int width,
                            int height, int channels,
                            const std::vector<std::uint8_t>& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(),
                               0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorCode::kIo, "cannot write PNG " + path.string() + ": " + message);
  }
}

}  // namespace detail

inline void write_png(const ImageBuffer& img,
                      const std::filesystem::path& path) {
  check(!img.empty(), ErrorCode::kInvalidArgument, "cannot write empty image");
  std::vector<std::uint8_t> bytes(img.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = to_byte(img.data()[i]);
  detail::write_png_bytes(path, img.width(), img.height(), img.channels(),
                          bytes);
}

/// Foreground 255, background 0.
inline void write_mask_png(const BinaryMask& mask,
                           const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = mask.bits()[i] ? 255 : 0;
  detail::write_png_bytes(path, mask.width(), mask.height(), 1, bytes);
}

/// Reads any PNG as 8-bit gray (1 channel) or RGB (3 channels); alpha is
/// dropped.
inline ImageBuffer read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::kMissingInput, "missing PNG: " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    fail(ErrorCode::kIo, "cannot read PNG " + path.string() + ": " +
                             image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    fail(ErrorCode::kIo, "cannot decode PNG " + path.string() + ": " + message);
  }
  std::vector<float> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    data[i] = static_cast<float>(bytes[i]) / 255.0f;
  return ImageBuffer(static_cast<int>(image.width),
                     static_cast<int>(image.height), channels, std::move(data));
}

/// Pixels brighter than mid-gray are foreground.
inline BinaryMask read_mask_png(const std::filesystem::path& path) {
  const ImageBuffer gray = to_gray(read_png(path));
  BinaryMask mask(gray.width(), gray.height());
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x)
      mask.set(x, y, gray.at(x, y) > 0.5f);
  return mask;
}

}  // namespace camo

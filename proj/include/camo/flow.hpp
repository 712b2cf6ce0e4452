#pragma once

// Dense optical flow: representation, Middlebury .flo I/O, grid
// correspondences, flow-based warping and color-wheel rendering.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "camo/error.hpp"
#include "camo/geometry.hpp"
#include "camo/image.hpp"

namespace camo {

/// Per-pixel forward displacement (dx, dy) in pixels, stored interleaved.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height)
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height * 2, 0.0f) {
    check(width > 0 && height > 0, ErrorCode::kDimensionTooSmall,
          "flow dimensions must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  float dx(int x, int y) const { return data_[index(x, y)]; }
  float dy(int x, int y) const { return data_[index(x, y) + 1]; }
  void set(int x, int y, float dx, float dy) {
    data_[index(x, y)] = dx;
    data_[index(x, y) + 1] = dy;
  }

  /// Bilinear sample at a (possibly fractional) pixel position, clamped to
  /// the frame.
  Point2 sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    auto lerp2 = [&](int comp) {
      const double top = (1.0 - fx) * data_[index(x0, y0) + comp] +
                         fx * data_[index(x1, y0) + comp];
      const double bottom = (1.0 - fx) * data_[index(x0, y1) + comp] +
                            fx * data_[index(x1, y1) + comp];
      return (1.0 - fy) * top + fy * bottom;
    };
    return {lerp2(0), lerp2(1)};
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v); });
  }

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * 2;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// m x n grid correspondences: each source grid point paired with itself
/// displaced by the bilinearly sampled flow. Targets leaving the frame are
/// kept.
inline CorrespondenceSet flow_to_correspondences(const FlowField& f, int m,
                                                 int n) {
  check(!f.empty(), ErrorCode::kDimensionTooSmall, "flow is empty");
  auto source = normalize_grid(f.width(), f.height(), m, n);
  std::vector<Point2> target;
  target.reserve(source.size());
  for (const auto& p : source) {
    const Point2 px = normalized_to_pixel(p, f.width(), f.height());
    const Point2 d = f.sample(px.x, px.y);
    target.push_back(
        pixel_to_normalized(px.x + d.x, px.y + d.y, f.width(), f.height()));
  }
  return CorrespondenceSet(std::move(source), std::move(target));
}

/// output(x) = next(x + f(x)); reconstructs frame t from frame t+1.
inline WarpResult warp_by_flow(const ImageBuffer& next, const FlowField& f,
                               Interpolation sampling = Interpolation::kBilinear) {
  check(next.width() == f.width() && next.height() == f.height(),
        ErrorCode::kDimensionMismatch, "frame and flow dimensions differ");
  WarpResult out{ImageBuffer(next.width(), next.height(), next.channels()),
                 BinaryMask(next.width(), next.height())};
  std::array<float, 3> px{};
  for (int y = 0; y < next.height(); ++y) {
    for (int x = 0; x < next.width(); ++x) {
      const double sx = x + static_cast<double>(f.dx(x, y));
      const double sy = y + static_cast<double>(f.dy(x, y));
      if (!detail::inside_for_sampling(sx, sy, next.width(), next.height()))
        continue;
      detail::sample_into(next, sx, sy, sampling, px.data());
      for (int c = 0; c < next.channels(); ++c) out.image.set(x, y, c, px[c]);
      out.valid.set(x, y, true);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height, then
// row-major float32 (dx, dy) pairs. All little-endian.

inline constexpr float kFloMagic = 202021.25f;
inline constexpr std::int64_t kFloMaxPixels = std::int64_t{1} << 28;

namespace detail {

template <typename T>
void append_le(std::vector<char>& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <typename T>
T read_le(const char* p) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i)
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]))
            << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::vector<char> encode_flo(const FlowField& f) {
  std::vector<char> bytes;
  bytes.reserve(12 + f.data().size() * 4);
  detail::append_le(bytes, kFloMagic);
  detail::append_le(bytes, static_cast<std::int32_t>(f.width()));
  detail::append_le(bytes, static_cast<std::int32_t>(f.height()));
  for (float v : f.data()) detail::append_le(bytes, v);
  return bytes;
}

inline FlowField decode_flo(const std::vector<char>& bytes) {
  if (bytes.size() < 4)
    fail(ErrorCode::kTruncatedFile, ".flo file shorter than its magic");
  if (detail::read_le<float>(bytes.data()) != kFloMagic)
    fail(ErrorCode::kBadMagic, ".flo magic mismatch");
  if (bytes.size() < 12)
    fail(ErrorCode::kTruncatedFile, ".flo header truncated");
  const auto width = detail::read_le<std::int32_t>(bytes.data() + 4);
  const auto height = detail::read_le<std::int32_t>(bytes.data() + 8);
  if (width <= 0 || height <= 0 ||
      static_cast<std::int64_t>(width) * height > kFloMaxPixels)
    fail(ErrorCode::kDimensionOverflow, ".flo dimensions out of range: " +
                                            std::to_string(width) + "x" +
                                            std::to_string(height));
  const std::size_t values = static_cast<std::size_t>(width) * height * 2;
  if (bytes.size() < 12 + values * 4)
    fail(ErrorCode::kTruncatedFile, ".flo payload truncated");
  FlowField f(width, height);
  const char* p = bytes.data() + 12;
  for (std::size_t i = 0; i < values; ++i, p += 4)
    f.data()[i] = detail::read_le<float>(p);
  return f;
}

inline void write_flo(const FlowField& f, const std::filesystem::path& path) {
  const auto bytes = encode_flo(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIo,
        "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(static_cast<bool>(out), ErrorCode::kIo,
        "write failed: " + path.string());
}

inline FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingInput, "cannot open: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_flo(bytes);
}

// ---------------------------------------------------------------------------

/// HSV color wheel: hue follows the flow direction, saturation grows with
/// magnitude up to max_magnitude (auto: the field's largest magnitude), value
/// is 1. Zero flow is white; opposite flows of equal magnitude land on
/// complementary colors.
inline ImageBuffer flow_to_color(const FlowField& f,
                                 std::optional<double> max_magnitude = {}) {
  check(f.all_finite(), ErrorCode::kInvalidArgument, "flow must be finite");
  double scale = 0.0;
  if (max_magnitude) {
    check(*max_magnitude > 0.0, ErrorCode::kInvalidArgument,
          "max_magnitude must be positive");
    scale = *max_magnitude;
  } else {
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        scale = std::max(scale, std::hypot(static_cast<double>(f.dx(x, y)),
                                           static_cast<double>(f.dy(x, y))));
  }

  ImageBuffer img(f.width(), f.height(), 3, 1.0f);
  if (scale <= 0.0) return img;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const double dx = f.dx(x, y), dy = f.dy(x, y);
      const double sat = std::min(std::hypot(dx, dy) / scale, 1.0);
      if (sat == 0.0) continue;
      double hue = std::atan2(dy, dx) / (2.0 * std::numbers::pi);
      if (hue < 0.0) hue += 1.0;
      const double h6 = hue * 6.0;
      // Fully saturated RGB at this hue, then blended toward white.
      std::array<double, 3> rgb{};
      for (int c = 0; c < 3; ++c) {
        const double k = std::fmod(h6 + (c == 0 ? 5.0 : c == 1 ? 3.0 : 1.0), 6.0);
        rgb[c] = 1.0 - std::clamp(std::min(k, 4.0 - k), 0.0, 1.0);
      }
      for (int c = 0; c < 3; ++c)
        img.set(x, y, c, static_cast<float>(1.0 - sat * (1.0 - rgb[c])));
    }
  }
  return img;
}

}  // namespace camo

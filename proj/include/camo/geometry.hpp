#pragma once

// Homogeneous-coordinate homography machinery: normalized grids, the DLT
// system, the weighted eigen-solve, point transfer, residuals and warping.
//
// Coordinates are normalized: pixel x in [0, W-1] maps affinely to [-1, 1].

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "camo/error.hpp"
#include "camo/image.hpp"

namespace camo {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double normalize_coord(double pixel, int extent) {
  return 2.0 * pixel / static_cast<double>(extent - 1) - 1.0;
}

inline double pixel_coord(double normalized, int extent) {
  return (normalized + 1.0) * 0.5 * static_cast<double>(extent - 1);
}

inline Point2 pixel_to_normalized(double px, double py, int width, int height) {
  return {normalize_coord(px, width), normalize_coord(py, height)};
}

inline Point2 normalized_to_pixel(const Point2& p, int width, int height) {
  return {pixel_coord(p.x, width), pixel_coord(p.y, height)};
}

/// Row-major m x n grid (m columns, n rows) of equidistant normalized points
/// whose extreme points sit exactly on +-1.
inline std::vector<Point2> normalize_grid(int width, int height, int m, int n) {
  check(width >= 2 && height >= 2, ErrorCode::kDimensionTooSmall,
        "grid image must be at least 2x2 pixels");
  check(m >= 2 && n >= 2, ErrorCode::kDimensionTooSmall,
        "grid must have at least 2 points per axis");
  auto axis = [](int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      v[i] = -1.0 + 2.0 * static_cast<double>(i) / (count - 1);
    v.front() = -1.0;
    v.back() = 1.0;
    return v;
  };
  const auto xs = axis(m);
  const auto ys = axis(n);
  std::vector<Point2> grid;
  grid.reserve(static_cast<std::size_t>(m) * n);
  for (double y : ys)
    for (double x : xs) grid.push_back({x, y});
  return grid;
}

/// Unit-Frobenius-norm representative of a 3x3 projective transform whose
/// first coefficient with |h_i| > kSignEpsilon is positive.
class Homography {
 public:
  static constexpr double kSignEpsilon = 1e-12;
  static constexpr double kInfinityEpsilon = 1e-12;

  Homography() : h_(Eigen::Matrix3d::Identity() / std::sqrt(3.0)) {}

  static Homography identity() { return Homography(); }

  static Homography from_matrix(const Eigen::Matrix3d& m) {
    check(m.allFinite(), ErrorCode::kInvalidArgument,
          "homography coefficients must be finite");
    const double norm = m.norm();
    check(norm > 0.0, ErrorCode::kInvalidArgument,
          "homography must not be the zero matrix");
    Homography h;
    h.h_ = m / norm;
    h.canonicalize_sign();
    return h;
  }

  /// Row-major coefficients h11, h12, ..., h33.
  static Homography from_coefficients(std::span<const double> coeffs) {
    check(coeffs.size() == 9, ErrorCode::kInvalidArgument,
          "a homography has 9 coefficients");
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = coeffs[i];
    return from_matrix(m);
  }

  const Eigen::Matrix3d& matrix() const noexcept { return h_; }

  std::array<double, 9> coefficients() const {
    std::array<double, 9> out{};
    for (int i = 0; i < 9; ++i) out[i] = h_(i / 3, i % 3);
    return out;
  }

  double condition_number() const {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h_);
    const Eigen::Vector3d s = svd.singularValues();
    if (s(2) <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(2);
  }

  Homography inverse() const {
    Eigen::FullPivLU<Eigen::Matrix3d> lu(h_);
    check(lu.isInvertible(), ErrorCode::kNonInvertible,
          "homography is not invertible");
    return from_matrix(lu.inverse());
  }

  Point2 apply(const Point2& p) const {
    const double u = h_(0, 0) * p.x + h_(0, 1) * p.y + h_(0, 2);
    const double v = h_(1, 0) * p.x + h_(1, 1) * p.y + h_(1, 2);
    const double s = h_(2, 0) * p.x + h_(2, 1) * p.y + h_(2, 2);
    if (std::abs(s) < kInfinityEpsilon)
      fail(ErrorCode::kPointAtInfinity, "point maps to infinity");
    return {u / s, v / s};
  }

  friend bool operator==(const Homography& a, const Homography& b) {
    return a.h_ == b.h_;
  }

 private:
  void canonicalize_sign() {
    for (int i = 0; i < 9; ++i) {
      const double c = h_(i / 3, i % 3);
      if (std::abs(c) > kSignEpsilon) {
        if (c < 0.0) h_ = -h_;
        return;
      }
    }
  }

  Eigen::Matrix3d h_;
};

inline Point2 apply_homography(const Homography& h, const Point2& p) {
  return h.apply(p);
}

/// Paired source/target points, N >= 4.
class CorrespondenceSet {
 public:
  static constexpr std::size_t kMinimumSize = 4;

  CorrespondenceSet() = default;
  CorrespondenceSet(std::vector<Point2> source, std::vector<Point2> target)
      : source_(std::move(source)), target_(std::move(target)) {
    check(source_.size() == target_.size(), ErrorCode::kLengthMismatch,
          "source and target must have equal length");
    check(source_.size() >= kMinimumSize, ErrorCode::kInsufficientSupport,
          "a correspondence set needs at least 4 pairs");
    for (std::size_t i = 0; i < source_.size(); ++i)
      check(std::isfinite(source_[i].x) && std::isfinite(source_[i].y) &&
                std::isfinite(target_[i].x) && std::isfinite(target_[i].y),
            ErrorCode::kInvalidArgument, "correspondences must be finite");
  }

  std::size_t size() const noexcept { return source_.size(); }
  const std::vector<Point2>& source() const noexcept { return source_; }
  const std::vector<Point2>& target() const noexcept { return target_; }

  CorrespondenceSet subset(std::span<const std::size_t> indices) const {
    std::vector<Point2> s, t;
    s.reserve(indices.size());
    t.reserve(indices.size());
    for (std::size_t i : indices) {
      s.push_back(source_[i]);
      t.push_back(target_[i]);
    }
    return CorrespondenceSet(std::move(s), std::move(t));
  }

 private:
  std::vector<Point2> source_;
  std::vector<Point2> target_;
};

/// The 2N x 9 data matrix; rows 2i and 2i+1 belong to correspondence i.
class DltMatrix {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;

  explicit DltMatrix(Matrix rows) : rows_(std::move(rows)) {}

  const Matrix& rows() const noexcept { return rows_; }
  std::size_t correspondence_count() const noexcept {
    return static_cast<std::size_t>(rows_.rows() / 2);
  }

  /// A * vec(H).
  Eigen::VectorXd times(const Homography& h) const {
    Eigen::Matrix<double, 9, 1> v;
    for (int i = 0; i < 9; ++i) v(i) = h.matrix()(i / 3, i % 3);
    return rows_ * v;
  }

 private:
  Matrix rows_;
};

inline DltMatrix build_dlt_matrix(const CorrespondenceSet& c) {
  DltMatrix::Matrix a(static_cast<Eigen::Index>(2 * c.size()), 9);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double xs = c.source()[i].x, ys = c.source()[i].y;
    const double xt = c.target()[i].x, yt = c.target()[i].y;
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << xs, ys, 1.0, 0.0, 0.0, 0.0, -xs * xt, -ys * xt, -xt;
    a.row(r + 1) << 0.0, 0.0, 0.0, xs, ys, 1.0, -xs * yt, -ys * yt, -yt;
  }
  return DltMatrix(std::move(a));
}

struct DltSolveOptions {
  // Correspondences with weight at or below this do not count as support.
  double weight_floor = 1e-6;
  // (lambda_1 - lambda_0) / lambda_max below this is an ambiguous null space.
  double degeneracy_gap = 1e-8;
  double max_condition = 1e8;
};

/// Least-eigenvalue eigenvector of A^T diag(w') A, where w' repeats each
/// correspondence weight on both of its rows.
inline Homography solve_weighted_dlt(const DltMatrix& a,
                                     std::span<const double> weights,
                                     const DltSolveOptions& options = {}) {
  const std::size_t n = a.correspondence_count();
  check(weights.size() == n, ErrorCode::kLengthMismatch,
        "one weight per correspondence is required");
  std::size_t support = 0;
  double total = 0.0;
  for (double w : weights) {
    check(std::isfinite(w) && w >= 0.0, ErrorCode::kInvalidArgument,
          "weights must be finite and non-negative");
    total += w;
    if (w > options.weight_floor) ++support;
  }
  check(total > 0.0 && support >= CorrespondenceSet::kMinimumSize,
        ErrorCode::kInsufficientSupport,
        "fewer than 4 correspondences carry weight above the floor");

  Eigen::VectorXd row_weights(static_cast<Eigen::Index>(2 * n));
  for (std::size_t i = 0; i < n; ++i) {
    row_weights(static_cast<Eigen::Index>(2 * i)) = weights[i];
    row_weights(static_cast<Eigen::Index>(2 * i + 1)) = weights[i];
  }
  const Eigen::Matrix<double, 9, 9> normal =
      a.rows().transpose() * (row_weights.asDiagonal() * a.rows());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(normal);
  check(eig.info() == Eigen::Success, ErrorCode::kDegenerateConfiguration,
        "eigendecomposition failed");
  const auto& lambda = eig.eigenvalues();
  const double scale = std::max(std::abs(lambda(8)), 1e-300);
  if ((lambda(1) - lambda(0)) / scale < options.degeneracy_gap)
    fail(ErrorCode::kDegenerateConfiguration,
         "null space of the weighted DLT system is not one-dimensional");

  const Eigen::Matrix<double, 9, 1> v = eig.eigenvectors().col(0);
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = v(i);
  Homography h = Homography::from_matrix(m);
  if (!(h.condition_number() < options.max_condition))
    fail(ErrorCode::kDegenerateConfiguration,
         "solved homography is numerically singular");
  return h;
}

inline Homography solve_dlt(const CorrespondenceSet& c,
                            const DltSolveOptions& options = {}) {
  const std::vector<double> ones(c.size(), 1.0);
  return solve_weighted_dlt(build_dlt_matrix(c), ones, options);
}

/// ||T_H(p_s) - p_t||_2 per correspondence, in normalized units.
inline std::vector<double> residuals(const Homography& h,
                                     const CorrespondenceSet& c) {
  std::vector<double> r(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    r[i] = distance(h.apply(c.source()[i]), c.target()[i]);
  return r;
}

inline const std::array<Point2, 4>& normalized_corners() {
  static const std::array<Point2, 4> corners{
      Point2{-1.0, -1.0}, Point2{1.0, -1.0}, Point2{1.0, 1.0},
      Point2{-1.0, 1.0}};
  return corners;
}

/// Largest distance between the images of the four frame corners under two
/// homographies, in normalized units.
inline double corner_transfer_error(const Homography& a, const Homography& b) {
  double worst = 0.0;
  for (const auto& c : normalized_corners())
    worst = std::max(worst, distance(a.apply(c), b.apply(c)));
  return worst;
}

/// Same as corner_transfer_error, measured in pixels of a width x height frame.
inline double corner_transfer_error_px(const Homography& a,
                                       const Homography& b, int width,
                                       int height) {
  double worst = 0.0;
  for (const auto& c : normalized_corners()) {
    const Point2 pa = normalized_to_pixel(a.apply(c), width, height);
    const Point2 pb = normalized_to_pixel(b.apply(c), width, height);
    worst = std::max(worst, distance(pa, pb));
  }
  return worst;
}

namespace detail {

// Pixel-space form of a normalized-coordinate homography for a w x h frame.
inline Eigen::Matrix3d to_pixel_space(const Eigen::Matrix3d& m, int width,
                                      int height) {
  Eigen::Matrix3d to_px = Eigen::Matrix3d::Identity();
  to_px(0, 0) = 0.5 * (width - 1);
  to_px(0, 2) = 0.5 * (width - 1);
  to_px(1, 1) = 0.5 * (height - 1);
  to_px(1, 2) = 0.5 * (height - 1);
  Eigen::Matrix3d to_norm = Eigen::Matrix3d::Identity();
  to_norm(0, 0) = 2.0 / (width - 1);
  to_norm(0, 2) = -1.0;
  to_norm(1, 1) = 2.0 / (height - 1);
  to_norm(1, 2) = -1.0;
  return to_px * m * to_norm;
}

}  // namespace detail

/// Inverse warping: output(q) = img(H^-1 q). Pixels whose sample falls outside
/// the source are zero and marked invalid.
inline WarpResult warp_image(const ImageBuffer& img, const Homography& h,
                             Interpolation sampling = Interpolation::kBilinear) {
  check(!img.empty(), ErrorCode::kDimensionTooSmall, "cannot warp empty image");
  check(img.width() >= 2 && img.height() >= 2, ErrorCode::kDimensionTooSmall,
        "warped image must be at least 2x2");
  if (!(h.condition_number() < DltSolveOptions{}.max_condition))
    fail(ErrorCode::kNonInvertible, "warp homography is not invertible");
  const Eigen::Matrix3d back =
      detail::to_pixel_space(h.inverse().matrix(), img.width(), img.height());

  WarpResult out{ImageBuffer(img.width(), img.height(), img.channels()),
                 BinaryMask(img.width(), img.height())};
  std::array<float, 3> px{};
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double s = back(2, 0) * x + back(2, 1) * y + back(2, 2);
      if (std::abs(s) < Homography::kInfinityEpsilon) continue;
      const double sx = (back(0, 0) * x + back(0, 1) * y + back(0, 2)) / s;
      const double sy = (back(1, 0) * x + back(1, 1) * y + back(1, 2)) / s;
      if (!detail::inside_for_sampling(sx, sy, img.width(), img.height()))
        continue;
      detail::sample_into(img, sx, sy, sampling, px.data());
      for (int c = 0; c < img.channels(); ++c) out.image.set(x, y, c, px[c]);
      out.valid.set(x, y, true);
    }
  }
  return out;
}

}  // namespace camo

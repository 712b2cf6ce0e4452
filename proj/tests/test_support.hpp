#pragma once

// Fixtures and independent reference computations shared by the tests.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "camo/geometry.hpp"
#include "camo/random.hpp"

namespace camo::testing {

/// A well-conditioned random homography: identity plus bounded perturbations
/// of the linear, translation and projective parts.
inline Homography random_homography(Rng& rng, double linear = 0.2,
                                    double translation = 0.2,
                                    double projective = 0.1) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) m(r, c) += rng.uniform(-linear, linear);
  m(0, 2) = rng.uniform(-translation, translation);
  m(1, 2) = rng.uniform(-translation, translation);
  m(2, 0) = rng.uniform(-projective, projective);
  m(2, 1) = rng.uniform(-projective, projective);
  return Homography::from_matrix(m);
}

/// Multiply-then-divide with plain scalars, independent of Homography::apply.
inline Point2 scalar_apply(const double h[9], double x, double y) {
  const double u = h[0] * x + h[1] * y + h[2];
  const double v = h[3] * x + h[4] * y + h[5];
  const double s = h[6] * x + h[7] * y + h[8];
  return {u / s, v / s};
}

inline Point2 scalar_apply(const Homography& h, const Point2& p) {
  const auto c = h.coefficients();
  return scalar_apply(c.data(), p.x, p.y);
}

/// Grid correspondences transferred exactly through `h`.
inline CorrespondenceSet exact_grid(const Homography& h, int m = 64, int n = 64) {
  std::vector<Point2> src = normalize_grid(256, 256, m, n);
  std::vector<Point2> dst;
  dst.reserve(src.size());
  for (const auto& p : src) dst.push_back(scalar_apply(h, p));
  return CorrespondenceSet(std::move(src), std::move(dst));
}

/// max |a_i - b_i| after bringing both to the same sign.
inline double max_coefficient_gap(const Homography& a, const Homography& b) {
  const auto ca = a.coefficients(), cb = b.coefficients();
  double same = 0.0, flipped = 0.0;
  for (int i = 0; i < 9; ++i) {
    same = std::max(same, std::abs(ca[i] - cb[i]));
    flipped = std::max(flipped, std::abs(ca[i] + cb[i]));
  }
  return std::min(same, flipped);
}

}  // namespace camo::testing

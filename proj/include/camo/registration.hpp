#pragma once

// Robust background homography from flow correspondences.
//
// The objective for correspondences Omega with inlier weights w is
//
//   L = sum(w * r) / sum(w)
//       - gamma * sum(l) - 1/|Omega| * sum(l log w + (1 - l) log(1 - w)),
//   l = sigmoid((epsilon - r) / tau),
//
// with r the transfer residual ||T_H(p_s) - p_t||. estimate_irls minimizes it
// by alternating a damped move of w toward l with a weighted DLT solve;
// estimate_ransac is the classic hypothesize-and-verify baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camo/error.hpp"
#include "camo/geometry.hpp"
#include "camo/image.hpp"
#include "camo/random.hpp"

namespace camo {

struct RegistrationConfig {
  double gamma = 0.05;
  double tau = 0.01;
  // Soft-inlier radius, normalized units.
  double epsilon = 0.01;
  int grid_m = 64;
  int grid_n = 64;
  int max_iterations = 200;
  // IRLS damping: w <- (1 - step_size) * w + step_size * l.
  double step_size = 0.5;
  double convergence_tolerance = 1e-9;
  int ransac_iterations = 500;
  double ransac_threshold = 0.01;
  double weight_floor = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    check(gamma > 0.0 && tau > 0.0 && epsilon > 0.0, ErrorCode::kConfigInvalid,
          "gamma, tau and epsilon must be positive");
    check(grid_m >= 2 && grid_n >= 2, ErrorCode::kConfigInvalid,
          "grid must be at least 2x2");
    check(max_iterations >= 1, ErrorCode::kConfigInvalid,
          "max_iterations must be >= 1");
    check(step_size > 0.0 && step_size <= 1.0, ErrorCode::kConfigInvalid,
          "step_size must be in (0, 1]");
    check(convergence_tolerance >= 0.0, ErrorCode::kConfigInvalid,
          "convergence_tolerance must be non-negative");
    check(ransac_iterations >= 1, ErrorCode::kConfigInvalid,
          "ransac_iterations must be >= 1");
    check(ransac_threshold > 0.0, ErrorCode::kConfigInvalid,
          "ransac_threshold must be positive");
    check(weight_floor > 0.0 && weight_floor < 1.0, ErrorCode::kConfigInvalid,
          "weight_floor must be in (0, 1)");
  }
};

/// Per-correspondence inlier weights in [0, 1].
class WeightMap {
 public:
  WeightMap() = default;
  explicit WeightMap(std::vector<double> w) : w_(std::move(w)) {
    for (double v : w_)
      check(std::isfinite(v) && v >= 0.0 && v <= 1.0,
            ErrorCode::kInvalidArgument, "weights must lie in [0, 1]");
  }
  WeightMap(std::size_t n, double value)
      : WeightMap(std::vector<double>(n, value)) {}

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const noexcept { return w_; }

  friend bool operator==(const WeightMap&, const WeightMap&) = default;

 private:
  std::vector<double> w_;
};

struct RegistrationResult {
  Homography homography;
  WeightMap weights;
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
  // Total loss of every evaluated iterate, in order (IRLS only).
  std::vector<double> loss_trace;
};

struct LossTerms {
  double total = 0.0;
  double fit = 0.0;
  double reg = 0.0;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> soft_inlier_labels(std::span<const double> r,
                                              double epsilon, double tau) {
  check(tau > 0.0, ErrorCode::kInvalidArgument, "tau must be positive");
  std::vector<double> l(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    check(r[i] >= 0.0, ErrorCode::kInvalidArgument,
          "residuals must be non-negative");
    l[i] = sigmoid((epsilon - r[i]) / tau);
  }
  return l;
}

namespace detail {

inline constexpr double kLogClamp = 1e-6;
// Residual assigned to points the model sends to infinity.
inline constexpr double kResidualCap = 1e3;

inline LossTerms loss_from_residuals(std::span<const double> r,
                                     std::span<const double> w,
                                     const RegistrationConfig& cfg) {
  double weight_sum = 0.0;
  double weighted_residual = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    weight_sum += w[i];
    weighted_residual += w[i] * r[i];
  }
  if (!(weight_sum >= cfg.weight_floor))
    fail(ErrorCode::kZeroTotalWeight, "total inlier weight below floor");

  const auto labels = soft_inlier_labels(r, cfg.epsilon, cfg.tau);
  double label_sum = 0.0;
  double cross_entropy = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double wc = std::clamp(w[i], kLogClamp, 1.0 - kLogClamp);
    label_sum += labels[i];
    cross_entropy += labels[i] * std::log(wc) + (1.0 - labels[i]) * std::log(1.0 - wc);
  }
  LossTerms t;
  t.fit = weighted_residual / weight_sum;
  t.reg = -cfg.gamma * label_sum -
          cross_entropy / static_cast<double>(r.size());
  t.total = t.fit + t.reg;
  return t;
}

inline std::vector<double> capped_residuals(const Homography& h,
                                            const CorrespondenceSet& c) {
  std::vector<double> r(c.size());
  const Eigen::Matrix3d& m = h.matrix();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point2& p = c.source()[i];
    const double s = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
    if (std::abs(s) < Homography::kInfinityEpsilon) {
      r[i] = kResidualCap;
      continue;
    }
    const Point2 q{(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / s,
                   (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / s};
    r[i] = std::min(distance(q, c.target()[i]), kResidualCap);
  }
  return r;
}

inline DltSolveOptions solve_options(const RegistrationConfig& cfg) {
  DltSolveOptions o;
  o.weight_floor = cfg.weight_floor;
  return o;
}

}  // namespace detail

/// Total, fit and regularizer terms of the registration objective.
inline LossTerms registration_loss(const CorrespondenceSet& c,
                                   const WeightMap& w, const Homography& h,
                                   const RegistrationConfig& cfg) {
  check(w.size() == c.size(), ErrorCode::kLengthMismatch,
        "weight map and correspondences differ in length");
  const auto r = residuals(h, c);
  return detail::loss_from_residuals(r, w.values(), cfg);
}

/// Fixed-count 4-point RANSAC followed by a weighted DLT re-solve over the
/// best consensus set. Deterministic for a given cfg.seed.
inline RegistrationResult estimate_ransac(const CorrespondenceSet& c,
                                          const RegistrationConfig& cfg) {
  cfg.validate();
  check(c.size() >= CorrespondenceSet::kMinimumSize,
        ErrorCode::kInsufficientSupport, "RANSAC needs at least 4 pairs");
  const std::size_t n = c.size();
  const auto options = detail::solve_options(cfg);
  Rng rng(cfg.seed);

  std::optional<Homography> best;
  std::size_t best_count = 0;
  double best_spread = std::numeric_limits<double>::infinity();
  std::vector<char> best_inliers;

  std::array<std::size_t, 4> sample{};
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh;
      do {
        sample[k] = rng.index(n);
        fresh = std::find(sample.begin(), sample.begin() + k, sample[k]) ==
                sample.begin() + k;
      } while (!fresh);
    }
    Homography h;
    try {
      h = solve_dlt(c.subset(sample), options);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConfiguration ||
          e.code() == ErrorCode::kInsufficientSupport)
        continue;
      throw;
    }
    const auto r = detail::capped_residuals(h, c);
    std::size_t count = 0;
    double spread = 0.0;
    std::vector<char> inliers(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] < cfg.ransac_threshold) {
        inliers[i] = 1;
        ++count;
        spread += r[i];
      }
    }
    if (count > best_count || (count == best_count && spread < best_spread)) {
      best = h;
      best_count = count;
      best_spread = spread;
      best_inliers = std::move(inliers);
    }
  }
  if (!best || best_count < CorrespondenceSet::kMinimumSize)
    fail(ErrorCode::kNoModelFound, "no non-degenerate minimal sample found");

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = best_inliers[i] ? 1.0 : 0.0;

  RegistrationResult result;
  result.homography = solve_weighted_dlt(build_dlt_matrix(c), w, options);
  result.weights = WeightMap(std::move(w));
  result.loss = detail::loss_from_residuals(
                    detail::capped_residuals(result.homography, c),
                    result.weights.values(), cfg)
                    .total;
  result.iterations = cfg.ransac_iterations;
  result.converged = true;
  return result;
}

/// Direct minimization of the registration objective: w starts at 0.5 and H
/// at the unweighted DLT solution; each round moves w toward the soft inlier
/// labels of the current residuals and re-solves H with those weights. The
/// iterate with the lowest total loss is returned.
inline RegistrationResult estimate_irls(const CorrespondenceSet& c,
                                        const RegistrationConfig& cfg) {
  cfg.validate();
  const std::size_t n = c.size();
  const DltMatrix a = build_dlt_matrix(c);
  const auto options = detail::solve_options(cfg);

  std::vector<double> w(n, 0.5);
  const std::vector<double> ones(n, 1.0);
  Homography h = solve_weighted_dlt(a, ones, options);

  RegistrationResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::quiet_NaN();
  int quiet_steps = 0;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const auto r = detail::capped_residuals(h, c);
    const double loss = detail::loss_from_residuals(r, w, cfg).total;
    result.loss_trace.push_back(loss);
    result.iterations = it + 1;
    if (loss < best_loss) {
      best_loss = loss;
      result.homography = h;
      result.weights = WeightMap(w);
      result.loss = loss;
    }
    if (std::isfinite(previous) &&
        std::abs(loss - previous) < cfg.convergence_tolerance) {
      if (++quiet_steps >= 3) {
        result.converged = true;
        break;
      }
    } else {
      quiet_steps = 0;
    }
    previous = loss;
    if (it + 1 == cfg.max_iterations) break;

    const auto labels = soft_inlier_labels(r, cfg.epsilon, cfg.tau);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = (1.0 - cfg.step_size) * w[i] + cfg.step_size * labels[i];
    h = solve_weighted_dlt(a, w, options);
  }
  return result;
}

struct DiffResult {
  // Single channel: mean over channels of |aligned(t+1) - t|.
  ImageBuffer diff;
  BinaryMask valid;
};

/// Background-compensated difference. `h` maps frame t to frame t+1
/// (normalized coordinates), so frame t+1 is resampled at h(x).
inline DiffResult align_and_diff(const ImageBuffer& frame_t,
                                 const ImageBuffer& frame_t1,
                                 const Homography& h) {
  check(frame_t.same_shape(frame_t1), ErrorCode::kDimensionMismatch,
        "frames differ in shape");
  const WarpResult aligned = warp_image(frame_t1, h.inverse());
  DiffResult out{ImageBuffer(frame_t.width(), frame_t.height(), 1),
                 aligned.valid};
  const int channels = frame_t.channels();
  for (int y = 0; y < frame_t.height(); ++y) {
    for (int x = 0; x < frame_t.width(); ++x) {
      if (!aligned.valid.at(x, y)) continue;
      double sum = 0.0;
      for (int ch = 0; ch < channels; ++ch)
        sum += std::abs(static_cast<double>(aligned.image.at(x, y, ch)) -
                        frame_t.at(x, y, ch));
      out.diff.set(x, y, 0, static_cast<float>(sum / channels));
    }
  }
  return out;
}

}  // namespace camo

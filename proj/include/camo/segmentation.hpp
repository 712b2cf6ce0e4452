#pragma once

// Classical moving-object discovery: the background-compensated motion
// residual and the aligned difference image are normalized, blended,
// binarized, cleaned up, and voted over time.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "camo/error.hpp"
#include "camo/flow.hpp"
#include "camo/geometry.hpp"
#include "camo/image.hpp"
#include "camo/parallel.hpp"
#include "camo/registration.hpp"

namespace camo {

enum class ThresholdMode { kOtsu, kFixed };
enum class Estimator { kIrls, kRansac };

struct SegmentationConfig {
  // Weight of the motion cue in the blend.
  double alpha = 0.7;
  ThresholdMode threshold_mode = ThresholdMode::kOtsu;
  double fixed_threshold = 0.5;
  // Components must exceed this fraction of the frame area.
  double min_area_fraction = 0.001;
  // Temporal voting window, odd.
  int window = 3;
  // Cue spans below this normalize to zero.
  double flat_epsilon = 1e-3;

  void validate() const {
    check(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kConfigInvalid,
          "alpha must be in [0, 1]");
    check(min_area_fraction >= 0.0 && min_area_fraction < 1.0,
          ErrorCode::kConfigInvalid, "min_area_fraction must be in [0, 1)");
    check(window >= 1 && window % 2 == 1, ErrorCode::kConfigInvalid,
          "window must be odd and >= 1");
    check(flat_epsilon >= 0.0, ErrorCode::kConfigInvalid,
          "flat_epsilon must be non-negative");
    check(std::isfinite(fixed_threshold), ErrorCode::kConfigInvalid,
          "fixed_threshold must be finite");
  }
};

struct PipelineOptions {
  RegistrationConfig registration;
  SegmentationConfig segmentation;
  Estimator estimator = Estimator::kIrls;
  // Worker threads for per-pair stages.
  int jobs = 1;
};

/// ||T_H(x) - (x + f(x))|| at every pixel, in normalized units. Pixels that
/// H sends to infinity get the largest finite value of the map.
inline SaliencyMap residual_motion_map(const FlowField& f, const Homography& h) {
  check(!f.empty(), ErrorCode::kDimensionTooSmall, "flow is empty");
  if (!(h.condition_number() < DltSolveOptions{}.max_condition))
    fail(ErrorCode::kNonInvertible, "homography is not invertible");
  const int w = f.width(), hgt = f.height();
  SaliencyMap map(w, hgt);
  std::vector<std::size_t> at_infinity;
  double largest = 0.0;
  for (int y = 0; y < hgt; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 src = pixel_to_normalized(x, y, w, hgt);
      const Point2 dst = pixel_to_normalized(x + static_cast<double>(f.dx(x, y)),
                                             y + static_cast<double>(f.dy(x, y)),
                                             w, hgt);
      try {
        const double r = distance(h.apply(src), dst);
        map.at(x, y) = r;
        largest = std::max(largest, r);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kPointAtInfinity) throw;
        at_infinity.push_back(static_cast<std::size_t>(y) * w + x);
      }
    }
  }
  for (std::size_t i : at_infinity) map.values[i] = largest;
  return map;
}

namespace detail {

// Min-max normalization over valid pixels; spans below flat_epsilon give
// zeros, as do invalid pixels.
inline std::vector<double> normalize_cue(const std::vector<double>& v,
                                         const BinaryMask* valid,
                                         double flat_epsilon) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (valid && !valid->bits()[i]) continue;
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  std::vector<double> out(v.size(), 0.0);
  if (!(hi - lo > flat_epsilon)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (valid && !valid->bits()[i]) continue;
    out[i] = (v[i] - lo) / (hi - lo);
  }
  return out;
}

}  // namespace detail

/// alpha * norm(motion) + (1 - alpha) * norm(diff). `valid` restricts the
/// normalization of both cues and zeroes the rest.
inline SaliencyMap fuse_cues(const SaliencyMap& motion, const ImageBuffer& diff,
                             double alpha, const BinaryMask* valid = nullptr,
                             double flat_epsilon = SegmentationConfig{}.flat_epsilon) {
  check(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument,
        "alpha must be in [0, 1]");
  check(motion.width == diff.width() && motion.height == diff.height(),
        ErrorCode::kDimensionMismatch, "cue dimensions differ");
  check(!valid || (valid->width() == motion.width &&
                   valid->height() == motion.height),
        ErrorCode::kDimensionMismatch, "validity mask dimensions differ");
  const ImageBuffer gray = to_gray(diff);
  std::vector<double> d(gray.data().begin(), gray.data().end());
  const auto m = detail::normalize_cue(motion.values, valid, flat_epsilon);
  const auto n = detail::normalize_cue(d, valid, flat_epsilon);
  SaliencyMap out(motion.width, motion.height);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = alpha * m[i] + (1.0 - alpha) * n[i];
  return out;
}

/// Otsu's threshold over a 256-bin histogram spanning [min, max] of `s`.
/// Returns the highest value assigned to the background class, or nullopt
/// for a flat map.
inline std::optional<double> otsu_threshold(const SaliencyMap& s,
                                            double flat_epsilon = 0.0) {
  constexpr int kBins = 256;
  const auto [lo_it, hi_it] = std::minmax_element(s.values.begin(), s.values.end());
  if (lo_it == s.values.end()) return std::nullopt;
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi - lo > flat_epsilon) || hi == lo) return std::nullopt;
  auto bin_of = [&](double v) {
    return std::min(kBins - 1, static_cast<int>((v - lo) / (hi - lo) * kBins));
  };
  std::array<double, kBins> hist{};
  for (double v : s.values) hist[bin_of(v)] += 1.0;
  const double total = static_cast<double>(s.values.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];

  double weight_bg = 0.0, sum_bg = 0.0, best_var = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins - 1; ++b) {
    weight_bg += hist[b];
    sum_bg += b * hist[b];
    const double weight_fg = total - weight_bg;
    if (weight_bg == 0.0 || weight_fg == 0.0) continue;
    const double mean_bg = sum_bg / weight_bg;
    const double mean_fg = (sum_all - sum_bg) / weight_fg;
    const double var = weight_bg * weight_fg * (mean_bg - mean_fg) * (mean_bg - mean_fg);
    if (var > best_var) {
      best_var = var;
      best_bin = b;
    }
  }
  // Largest value that falls in a background bin.
  double threshold = lo;
  for (double v : s.values)
    if (bin_of(v) <= best_bin) threshold = std::max(threshold, v);
  return threshold;
}

namespace detail {

inline BinaryMask morph(const BinaryMask& in, bool dilate) {
  BinaryMask out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      bool v = !dilate;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= in.width() || ny >= in.height())
            continue;
          if (dilate) v = v || in.at(nx, ny);
          else v = v && in.at(nx, ny);
        }
      out.set(x, y, v);
    }
  }
  return out;
}

}  // namespace detail

inline BinaryMask erode3x3(const BinaryMask& m) { return detail::morph(m, false); }
inline BinaryMask dilate3x3(const BinaryMask& m) { return detail::morph(m, true); }

/// 8-connected components; returns the largest (first in raster order on
/// ties) and its area.
inline std::pair<BinaryMask, std::size_t> largest_component(const BinaryMask& m) {
  const int w = m.width(), h = m.height();
  std::vector<int> label(m.size(), -1);
  int best_label = -1;
  std::size_t best_area = 0;
  int next_label = 0;
  std::queue<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!m.at(x, y) || label[i] >= 0) continue;
      const int id = next_label++;
      std::size_t area = 0;
      label[i] = id;
      frontier.push({x, y});
      while (!frontier.empty()) {
        const auto [cx, cy] = frontier.front();
        frontier.pop();
        ++area;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
            if (m.at(nx, ny) && label[j] < 0) {
              label[j] = id;
              frontier.push({nx, ny});
            }
          }
      }
      if (area > best_area) {
        best_area = area;
        best_label = id;
      }
    }
  }
  BinaryMask out(w, h);
  if (best_label >= 0)
    for (std::size_t i = 0; i < label.size(); ++i)
      if (label[i] == best_label)
        out.set(static_cast<int>(i % w), static_cast<int>(i / w), true);
  return {out, best_area};
}

/// Binarize (Otsu or fixed), open then close with a 3x3 square, keep the
/// largest 8-connected component if it exceeds min_area_fraction of the
/// frame.
inline SegMask threshold_and_clean(const SaliencyMap& s,
                                   const SegmentationConfig& cfg = {}) {
  cfg.validate();
  for (double v : s.values)
    check(std::isfinite(v), ErrorCode::kInvalidArgument,
          "saliency map must be finite");
  SegMask raw(s.width, s.height);
  std::optional<double> threshold;
  if (cfg.threshold_mode == ThresholdMode::kOtsu)
    threshold = otsu_threshold(s, cfg.flat_epsilon);
  else
    threshold = cfg.fixed_threshold;
  if (!threshold) return raw;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) raw.set(x, y, s.at(x, y) > *threshold);

  const SegMask opened = dilate3x3(erode3x3(raw));
  const SegMask closed = erode3x3(dilate3x3(opened));
  auto [component, area] = largest_component(closed);
  const double min_area =
      cfg.min_area_fraction * static_cast<double>(s.width) * s.height;
  if (!(static_cast<double>(area) > min_area)) return SegMask(s.width, s.height);
  return component;
}

/// Per-pixel majority over a centered window clipped at the sequence ends.
/// An exact tie (possible only in a clipped window) keeps the center value.
inline std::vector<SegMask> temporal_smooth(const std::vector<SegMask>& masks,
                                            int window) {
  check(window >= 1 && window % 2 == 1, ErrorCode::kInvalidArgument,
        "window must be odd and >= 1");
  for (const auto& m : masks)
    check(m.same_shape(masks.front()), ErrorCode::kDimensionMismatch,
          "masks differ in dimensions");
  if (window == 1 || masks.empty()) return masks;
  const int half = window / 2;
  const int count = static_cast<int>(masks.size());
  std::vector<SegMask> out;
  out.reserve(masks.size());
  for (int t = 0; t < count; ++t) {
    const int first = std::max(0, t - half);
    const int last = std::min(count - 1, t + half);
    const int size = last - first + 1;
    SegMask m(masks[t].width(), masks[t].height());
    for (std::size_t i = 0; i < m.size(); ++i) {
      int votes = 0;
      for (int k = first; k <= last; ++k) votes += masks[k].bits()[i];
      const bool on = 2 * votes > size ||
                      (2 * votes == size && masks[t].bits()[i] != 0);
      if (on) m.set(static_cast<int>(i % m.width()),
                    static_cast<int>(i / m.width()), true);
    }
    out.push_back(std::move(m));
  }
  return out;
}

/// Every intermediate product of one frame pair.
struct PairSegmentation {
  RegistrationResult registration;
  DiffResult diff;
  SaliencyMap motion;
  SaliencyMap fused;
  SegMask mask;
};

inline RegistrationResult register_pair(const FlowField& flow,
                                        const PipelineOptions& cfg) {
  const auto c = flow_to_correspondences(flow, cfg.registration.grid_m,
                                         cfg.registration.grid_n);
  return cfg.estimator == Estimator::kIrls
             ? estimate_irls(c, cfg.registration)
             : estimate_ransac(c, cfg.registration);
}

inline PairSegmentation segment_pair(const ImageBuffer& frame_t,
                                     const ImageBuffer& frame_t1,
                                     const FlowField& flow,
                                     const PipelineOptions& cfg) {
  check(frame_t.width() == flow.width() && frame_t.height() == flow.height(),
        ErrorCode::kDimensionMismatch, "frame and flow dimensions differ");
  PairSegmentation out;
  out.registration = register_pair(flow, cfg);
  const Homography& h = out.registration.homography;
  out.diff = align_and_diff(frame_t, frame_t1, h);
  out.motion = residual_motion_map(flow, h);
  out.fused = fuse_cues(out.motion, out.diff.diff, cfg.segmentation.alpha,
                        &out.diff.valid, cfg.segmentation.flat_epsilon);
  out.mask = threshold_and_clean(out.fused, cfg.segmentation);
  return out;
}

struct SequenceSegmentation {
  std::vector<PairSegmentation> pairs;
  // Temporally smoothed masks, one per pair.
  std::vector<SegMask> masks;
};

/// Runs segment_pair on every consecutive pair, then temporal_smooth. Stage
/// errors carry the index of the failing pair.
inline SequenceSegmentation segment_sequence_detailed(
    const std::vector<ImageBuffer>& frames, const std::vector<FlowField>& flows,
    const PipelineOptions& cfg) {
  cfg.registration.validate();
  cfg.segmentation.validate();
  check(frames.size() >= 2, ErrorCode::kLengthMismatch,
        "a sequence needs at least 2 frames");
  check(flows.size() + 1 == frames.size(), ErrorCode::kLengthMismatch,
        "expected one flow per consecutive frame pair");
  SequenceSegmentation out;
  out.pairs.resize(flows.size());
  parallel_for(flows.size(), cfg.jobs, [&](std::size_t t) {
    try {
      out.pairs[t] = segment_pair(frames[t], frames[t + 1], flows[t], cfg);
    } catch (const Error& e) {
      throw e.with_frame(static_cast<int>(t));
    }
  });
  std::vector<SegMask> raw;
  raw.reserve(out.pairs.size());
  for (const auto& p : out.pairs) raw.push_back(p.mask);
  out.masks = temporal_smooth(raw, cfg.segmentation.window);
  return out;
}

inline std::vector<SegMask> segment_sequence(const std::vector<ImageBuffer>& frames,
                                             const std::vector<FlowField>& flows,
                                             const PipelineOptions& cfg) {
  return segment_sequence_detailed(frames, flows, cfg).masks;
}

}  // namespace camo

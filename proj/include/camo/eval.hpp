#pragma once

// Segmentation and box metrics plus the motion-filtered aggregation protocol.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "camo/error.hpp"
#include "camo/image.hpp"

namespace camo {

/// Axis-aligned box, half-open: [x_min, x_max) x [y_min, y_max).
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  static BoundingBox empty() { return {}; }

  bool is_empty() const noexcept { return !(x_min < x_max && y_min < y_max); }
  double area() const noexcept {
    return is_empty() ? 0.0 : (x_max - x_min) * (y_max - y_min);
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class MotionLabel { kLocomotion, kDeformation, kStatic };

inline std::string_view to_string(MotionLabel label) {
  switch (label) {
    case MotionLabel::kLocomotion: return "locomotion";
    case MotionLabel::kDeformation: return "deformation";
    case MotionLabel::kStatic: return "static";
  }
  return "static";
}

inline MotionLabel parse_motion_label(std::string_view s) {
  if (s == "locomotion") return MotionLabel::kLocomotion;
  if (s == "deformation") return MotionLabel::kDeformation;
  if (s == "static") return MotionLabel::kStatic;
  fail(ErrorCode::kInvalidArgument, "unknown motion label: " + std::string(s));
}

/// Intersection over union; 1 when both masks are empty.
inline double region_similarity_J(const SegMask& pred, const SegMask& gt) {
  check(pred.same_shape(gt), ErrorCode::kDimensionMismatch,
        "masks differ in dimensions");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.bits()[i] != 0, b = gt.bits()[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Foreground pixels with at least one 8-neighbor that is background or
/// outside the frame.
inline BinaryMask contour_pixels(const SegMask& m) {
  BinaryMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx)
          if ((dx || dy) && !m.at_or(x + dx, y + dy, false)) edge = true;
      out.set(x, y, edge);
    }
  return out;
}

/// Contour F-measure default tolerance: 0.8% of the diagonal, rounded up.
inline int default_contour_tolerance(int width, int height) {
  return static_cast<int>(
      std::ceil(0.008 * std::hypot(static_cast<double>(width), height)));
}

namespace detail {

// Marks every pixel within Euclidean distance `tol` of a set pixel.
inline BinaryMask dilate_disk(const BinaryMask& m, double tol) {
  BinaryMask out(m.width(), m.height());
  const int r = static_cast<int>(std::floor(tol));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= tol * tol) offsets.emplace_back(dx, dy);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      for (const auto& [dx, dy] : offsets) {
        const int nx = x + dx, ny = y + dy;
        if (nx >= 0 && ny >= 0 && nx < m.width() && ny < m.height())
          out.set(nx, ny, true);
      }
    }
  return out;
}

inline std::size_t count_matched(const BinaryMask& points,
                                 const BinaryMask& reach) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < points.size(); ++i)
    n += (points.bits()[i] && reach.bits()[i]) ? 1 : 0;
  return n;
}

}  // namespace detail

/// Boundary F-measure: a contour pixel counts as matched when a contour pixel
/// of the other mask lies within `tol` pixels (Euclidean).
inline double contour_accuracy_F(const SegMask& pred, const SegMask& gt,
                                 double tol) {
  check(pred.same_shape(gt), ErrorCode::kDimensionMismatch,
        "masks differ in dimensions");
  check(tol >= 0.0, ErrorCode::kInvalidArgument, "tolerance must be >= 0");
  const BinaryMask cp = contour_pixels(pred);
  const BinaryMask cg = contour_pixels(gt);
  const std::size_t np = cp.count(), ng = cg.count();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double precision =
      static_cast<double>(detail::count_matched(cp, detail::dilate_disk(cg, tol))) / np;
  const double recall =
      static_cast<double>(detail::count_matched(cg, detail::dilate_disk(cp, tol))) / ng;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline BoundingBox min_enclosing_box(const SegMask& pred) {
  int x0 = pred.width(), y0 = pred.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x)
      if (pred.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return BoundingBox::empty();
  return {static_cast<double>(x0), static_cast<double>(y0),
          static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
}

/// IoU of two boxes; 1 when both are empty.
inline double box_iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.is_empty() && b.is_empty()) return 1.0;
  if (a.is_empty() || b.is_empty()) return 0.0;
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  return inter / (a.area() + b.area() - inter);
}

/// IoU between the ground-truth box and the tightest box around the
/// prediction.
inline double moca_box_iou(const SegMask& pred, const BoundingBox& gt) {
  check(gt.x_min >= 0.0 && gt.y_min >= 0.0 && gt.x_max <= pred.width() &&
            gt.y_max <= pred.height(),
        ErrorCode::kOutOfFrameBox, "ground-truth box leaves the frame");
  return box_iou(min_enclosing_box(pred), gt);
}

struct Keyframe {
  int frame = 0;
  BoundingBox box;
};

/// Per-coordinate linear interpolation between bracketing keyframes for
/// frames [0, frame_count); frames outside the keyframe range copy the
/// nearest keyframe.
inline std::vector<BoundingBox> interpolate_boxes(
    const std::vector<Keyframe>& keyframes, int frame_count) {
  check(!keyframes.empty(), ErrorCode::kEmptyKeyframes, "no keyframes given");
  for (std::size_t i = 1; i < keyframes.size(); ++i)
    check(keyframes[i].frame > keyframes[i - 1].frame,
          ErrorCode::kInvalidArgument,
          "keyframe indices must be strictly increasing");
  check(frame_count >= 0, ErrorCode::kInvalidArgument,
        "frame count must be non-negative");
  std::vector<BoundingBox> boxes(static_cast<std::size_t>(frame_count));
  std::size_t k = 0;
  for (int f = 0; f < frame_count; ++f) {
    if (f <= keyframes.front().frame) {
      boxes[f] = keyframes.front().box;
      continue;
    }
    if (f >= keyframes.back().frame) {
      boxes[f] = keyframes.back().box;
      continue;
    }
    while (keyframes[k + 1].frame < f) ++k;
    const Keyframe& a = keyframes[k];
    const Keyframe& b = keyframes[k + 1];
    if (f == b.frame) {
      boxes[f] = b.box;
      continue;
    }
    const double s = static_cast<double>(f - a.frame) / (b.frame - a.frame);
    auto lerp = [s](double u, double v) { return u + s * (v - u); };
    boxes[f] = {lerp(a.box.x_min, b.box.x_min), lerp(a.box.y_min, b.box.y_min),
                lerp(a.box.x_max, b.box.x_max), lerp(a.box.y_max, b.box.y_max)};
  }
  return boxes;
}

/// Metric values of one frame; absent when the ground truth for it is
/// unavailable.
struct FrameScore {
  int frame = 0;
  std::optional<double> j;
  std::optional<double> f;
  std::optional<double> box_iou;
};

enum class AllMotionRule {
  // Mean over every non-static frame.
  kFrameMean,
  // Mean of the Locomotion and Deformation means.
  kMeanOfMeans,
};

struct EvalConfig {
  // Contour F tolerance in pixels; default_contour_tolerance when unset.
  std::optional<double> contour_tolerance;
  AllMotionRule all_motion_rule = AllMotionRule::kFrameMean;
};

struct MetricSummary {
  std::optional<double> locomotion;
  std::optional<double> deformation;
  std::optional<double> all_motion;
  // Fraction of non-static frames scoring above 0.5.
  std::optional<double> recall;
};

struct EvalReport {
  // True when every frame is static: nothing was scored.
  bool empty = false;
  std::size_t scored_frames = 0;
  std::optional<MetricSummary> j;
  std::optional<MetricSummary> f;
  std::optional<MetricSummary> box_iou;
};

namespace detail {

template <typename Get>
std::optional<MetricSummary> summarize(const std::vector<FrameScore>& scores,
                                       const std::vector<MotionLabel>& labels,
                                       Get get, AllMotionRule rule) {
  double loco = 0.0, deform = 0.0;
  std::size_t n_loco = 0, n_deform = 0, above = 0;
  bool any = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == MotionLabel::kStatic) continue;
    const std::optional<double> v = get(scores[i]);
    if (!v) continue;
    any = true;
    if (labels[i] == MotionLabel::kLocomotion) {
      loco += *v;
      ++n_loco;
    } else {
      deform += *v;
      ++n_deform;
    }
    if (*v > 0.5) ++above;
  }
  if (!any) return std::nullopt;
  MetricSummary s;
  if (n_loco) s.locomotion = loco / n_loco;
  if (n_deform) s.deformation = deform / n_deform;
  const std::size_t n = n_loco + n_deform;
  if (rule == AllMotionRule::kFrameMean || !n_loco || !n_deform)
    s.all_motion = (loco + deform) / n;
  else
    s.all_motion = 0.5 * (*s.locomotion + *s.deformation);
  s.recall = static_cast<double>(above) / n;
  return s;
}

}  // namespace detail

/// Motion-filtered aggregation: Static frames are excluded everywhere.
inline EvalReport aggregate(const std::vector<FrameScore>& scores,
                            const std::vector<MotionLabel>& labels,
                            AllMotionRule rule = AllMotionRule::kFrameMean) {
  check(scores.size() == labels.size(), ErrorCode::kLengthMismatch,
        "one motion label per frame score is required");
  EvalReport report;
  report.scored_frames = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(),
                    [](MotionLabel l) { return l != MotionLabel::kStatic; }));
  report.empty = report.scored_frames == 0;
  if (report.empty) return report;
  report.j = detail::summarize(scores, labels,
                               [](const FrameScore& s) { return s.j; }, rule);
  report.f = detail::summarize(scores, labels,
                               [](const FrameScore& s) { return s.f; }, rule);
  report.box_iou = detail::summarize(
      scores, labels, [](const FrameScore& s) { return s.box_iou; }, rule);
  return report;
}

}  // namespace camo

#pragma once

// Synthetic sequences with exact ground truth: a procedurally textured
// background viewed through a sequence of jittered quadrilaterals (one
// homography per frame pair) plus an independently moving textured sprite.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "camo/error.hpp"
#include "camo/flow.hpp"
#include "camo/geometry.hpp"
#include "camo/image.hpp"
#include "camo/random.hpp"

namespace camo {

enum class CameraMode { kContinuous, kRandom };
enum class SpriteShape { kEllipse, kPolygon };

/// Frames first..last (inclusive) share one sprite pose.
struct StaticInterval {
  int first = 0;
  int last = 0;

  friend bool operator==(const StaticInterval&, const StaticInterval&) = default;
};

struct SpriteConfig {
  bool enabled = true;
  SpriteShape shape = SpriteShape::kEllipse;
  // Semi-major axis as a fraction of min(width, height).
  double min_radius = 0.10;
  double max_radius = 0.18;
  // Semi-minor / semi-major.
  double min_aspect = 0.6;
  double max_aspect = 1.0;
  // Pixels per frame.
  double min_speed = 2.0;
  double max_speed = 5.0;
  // Radians per frame.
  double rotation_speed = 0.0;
};

struct SynthConfig {
  CameraMode mode = CameraMode::kContinuous;
  int width = 256;
  int height = 256;
  int length = 29;
  // Maximum vertex displacement as a fraction of the crop side.
  double jitter = 0.06;
  std::optional<StaticInterval> static_interval;
  // Frame t is scaled by (1 + brightness_drift * t).
  double brightness_drift = 0.0;
  SpriteConfig sprite;
  int grid_m = 64;
  int grid_n = 64;
  std::uint64_t seed = 0;

  void validate() const {
    check(length >= 2, ErrorCode::kConfigInvalid,
          "sequence length must be at least 2");
    check(width >= 16 && height >= 16, ErrorCode::kConfigInvalid,
          "frames must be at least 16x16");
    check(jitter >= 0.0 && jitter <= 0.1, ErrorCode::kConfigInvalid,
          "jitter must be in [0, 0.1]");
    check(grid_m >= 2 && grid_n >= 2, ErrorCode::kConfigInvalid,
          "grid must be at least 2x2");
    check(std::isfinite(brightness_drift) &&
              1.0 + brightness_drift * (length - 1) > 0.0,
          ErrorCode::kConfigInvalid, "brightness drift makes frames negative");
    if (static_interval) {
      check(static_interval->first >= 0 &&
                static_interval->first <= static_interval->last &&
                static_interval->last < length,
            ErrorCode::kConfigInvalid, "static interval outside the sequence");
    }
    const SpriteConfig& s = sprite;
    if (s.enabled) {
      check(s.min_radius > 0.0 && s.min_radius <= s.max_radius &&
                s.max_radius < 0.45,
            ErrorCode::kConfigInvalid, "sprite radius range invalid");
      check(s.min_aspect > 0.0 && s.min_aspect <= s.max_aspect &&
                s.max_aspect <= 1.0,
            ErrorCode::kConfigInvalid, "sprite aspect range invalid");
      check(s.min_speed >= 0.0 && s.min_speed <= s.max_speed,
            ErrorCode::kConfigInvalid, "sprite speed range invalid");
      check(std::isfinite(s.rotation_speed), ErrorCode::kConfigInvalid,
            "sprite rotation speed must be finite");
    }
  }
};

struct SpritePose {
  double cx = 0.0;
  double cy = 0.0;
  double angle = 0.0;

  friend bool operator==(const SpritePose&, const SpritePose&) = default;
};

using Quad = std::array<Point2, 4>;

struct SyntheticSequence {
  SynthConfig config;
  std::vector<ImageBuffer> frames;
  // Frame t -> frame t+1, normalized coordinates. length - 1 entries.
  std::vector<Homography> gt_homographies;
  // Background and sprite motion composed. length - 1 entries.
  std::vector<FlowField> gt_flows;
  // One grid (config.grid_m x config.grid_n, row-major) per pair; true =
  // background inlier.
  std::vector<std::vector<bool>> gt_inlier_maps;
  std::vector<SegMask> gt_masks;
  // Camera quadrilateral of each frame in source-texture coordinates.
  std::vector<Quad> camera_quads;
  // Where the corners of frame t land in frame t+1; gt_homographies[t] is
  // quad_to_homography(normalized_corners(), pair_quads[t]).
  std::vector<Quad> pair_quads;
  std::vector<SpritePose> sprite_poses;
};

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool is_strictly_convex(const Quad& q) {
  constexpr double kEps = 1e-9;
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    // Every vertex triple must turn the same way and be non-collinear.
    const double c = cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
    if (std::abs(c) <= kEps) return false;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

}  // namespace detail

/// Exact 4-point DLT: the homography taking each src vertex to its dst vertex.
inline Homography quad_to_homography(const Quad& src, const Quad& dst) {
  if (!detail::is_strictly_convex(src) || !detail::is_strictly_convex(dst))
    fail(ErrorCode::kDegenerateConfiguration,
         "quadrilateral is not convex or has collinear vertices");
  return solve_dlt(CorrespondenceSet({src.begin(), src.end()},
                                     {dst.begin(), dst.end()}));
}

/// Smooth band-limited RGB texture: a few shared plane waves with a per-wave
/// color tint around a base color.
class ProceduralTexture {
 public:
  struct Wave {
    double fx = 0.0;
    double fy = 0.0;
    double phase = 0.0;
    double amplitude = 0.0;
    std::array<double, 3> tint{};
  };

  ProceduralTexture() = default;

  /// Frequencies in cycles per coordinate unit.
  static ProceduralTexture random(Rng& rng, int waves, double min_freq,
                                  double max_freq) {
    ProceduralTexture t;
    for (double& b : t.base_) b = rng.uniform(0.35, 0.65);
    const double budget = 0.3;
    for (int k = 0; k < waves; ++k) {
      Wave w;
      const double f = rng.uniform(min_freq, max_freq);
      const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
      w.fx = f * std::cos(dir);
      w.fy = f * std::sin(dir);
      w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      w.amplitude = budget / waves * rng.uniform(0.5, 1.0);
      for (double& c : w.tint) c = rng.uniform(0.6, 1.0);
      t.waves_.push_back(w);
    }
    return t;
  }

  std::array<double, 3> operator()(double u, double v) const {
    std::array<double, 3> rgb = base_;
    for (const Wave& w : waves_) {
      const double s =
          w.amplitude *
          std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
      for (int c = 0; c < 3; ++c) rgb[c] += w.tint[c] * s;
    }
    return rgb;
  }

 private:
  std::array<double, 3> base_{0.5, 0.5, 0.5};
  std::vector<Wave> waves_;
};

/// Rigid sprite outline in local (sprite-centered, unrotated) pixels.
class SpriteOutline {
 public:
  SpriteOutline() = default;
  SpriteOutline(SpriteShape shape, double semi_major, double semi_minor,
                Rng& rng)
      : shape_(shape), a_(semi_major), b_(semi_minor) {
    if (shape_ == SpriteShape::kPolygon) {
      constexpr int kVertices = 7;
      for (int k = 0; k < kVertices; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / kVertices;
        const double scale = rng.uniform(0.75, 1.0);
        polygon_.push_back(
            {a_ * scale * std::cos(theta), b_ * scale * std::sin(theta)});
      }
    }
  }

  double bounding_radius() const noexcept { return a_; }

  bool contains(double lx, double ly) const {
    if (shape_ == SpriteShape::kEllipse)
      return (lx * lx) / (a_ * a_) + (ly * ly) / (b_ * b_) <= 1.0;
    bool inside = false;
    const std::size_t n = polygon_.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point2& p = polygon_[i];
      const Point2& q = polygon_[j];
      if ((p.y > ly) != (q.y > ly) &&
          lx < (q.x - p.x) * (ly - p.y) / (q.y - p.y) + p.x)
        inside = !inside;
    }
    return inside;
  }

 private:
  SpriteShape shape_ = SpriteShape::kEllipse;
  double a_ = 1.0;
  double b_ = 1.0;
  std::vector<Point2> polygon_;
};

inline Point2 to_sprite_local(const SpritePose& pose, double px, double py) {
  const double c = std::cos(pose.angle), s = std::sin(pose.angle);
  const double dx = px - pose.cx, dy = py - pose.cy;
  return {c * dx + s * dy, -s * dx + c * dy};
}

inline Point2 from_sprite_local(const SpritePose& pose, const Point2& local) {
  const double c = std::cos(pose.angle), s = std::sin(pose.angle);
  return {pose.cx + c * local.x - s * local.y,
          pose.cy + s * local.x + c * local.y};
}

/// Grid point i of pair t is an outlier iff its nearest pixel lies inside the
/// sprite mask of frame t.
inline std::vector<std::vector<bool>> gt_inlier_map(
    const SyntheticSequence& seq, int m, int n) {
  std::vector<std::vector<bool>> maps;
  if (seq.gt_masks.empty()) return maps;
  const int w = seq.gt_masks.front().width();
  const int h = seq.gt_masks.front().height();
  const auto grid = normalize_grid(w, h, m, n);
  const std::size_t pairs = seq.gt_masks.size() - 1;
  maps.reserve(pairs);
  for (std::size_t t = 0; t < pairs; ++t) {
    std::vector<bool> inliers(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Point2 px = normalized_to_pixel(grid[i], w, h);
      const int xi = static_cast<int>(std::lround(px.x));
      const int yi = static_cast<int>(std::lround(px.y));
      inliers[i] = !seq.gt_masks[t].at(xi, yi);
    }
    maps.push_back(std::move(inliers));
  }
  return maps;
}

inline SyntheticSequence generate_sequence(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int W = cfg.width, H = cfg.height, L = cfg.length;

  SyntheticSequence seq;
  seq.config = cfg;

  // Camera: crop square [-kCrop, kCrop]^2 of the texture plane, vertices
  // jittered by up to jitter * side.
  constexpr double kCrop = 0.75;
  const Quad crop{Point2{-kCrop, -kCrop}, Point2{kCrop, -kCrop},
                  Point2{kCrop, kCrop}, Point2{-kCrop, kCrop}};
  const double reach = cfg.jitter * 2.0 * kCrop;
  auto jittered = [&] {
    Quad q = crop;
    for (auto& v : q) {
      v.x += rng.uniform(-reach, reach);
      v.y += rng.uniform(-reach, reach);
    }
    return q;
  };
  if (cfg.mode == CameraMode::kContinuous) {
    const Quad start = jittered();
    const Quad end = jittered();
    for (int t = 0; t < L; ++t) {
      const double s = static_cast<double>(t) / (L - 1);
      Quad q;
      for (int k = 0; k < 4; ++k)
        q[k] = {(1.0 - s) * start[k].x + s * end[k].x,
                (1.0 - s) * start[k].y + s * end[k].y};
      seq.camera_quads.push_back(q);
    }
  } else {
    for (int t = 0; t < L; ++t) seq.camera_quads.push_back(jittered());
  }

  const Quad& corners = normalized_corners();
  std::vector<Homography> frame_to_texture;
  for (const Quad& q : seq.camera_quads)
    frame_to_texture.push_back(quad_to_homography(corners, q));
  for (int t = 0; t + 1 < L; ++t) {
    const Homography back = frame_to_texture[t + 1].inverse();
    Quad q;
    for (int k = 0; k < 4; ++k) q[k] = back.apply(seq.camera_quads[t][k]);
    seq.pair_quads.push_back(q);
    seq.gt_homographies.push_back(quad_to_homography(corners, q));
  }

  // Texture units are crop-normalized: one unit is roughly W / (2 kCrop) px.
  const ProceduralTexture background = ProceduralTexture::random(rng, 6, 1.0, 8.0);
  const ProceduralTexture sprite_texture =
      ProceduralTexture::random(rng, 6, 1.0 / 48.0, 1.0 / 16.0);

  // Sprite trajectory.
  SpriteOutline outline;
  const SpriteConfig& sc = cfg.sprite;
  if (sc.enabled) {
    const double side = std::min(W, H);
    const double a = side * rng.uniform(sc.min_radius, sc.max_radius);
    const double b = a * rng.uniform(sc.min_aspect, sc.max_aspect);
    outline = SpriteOutline(sc.shape, a, b, rng);
    const double margin = a + 2.0;
    SpritePose pose{rng.uniform(margin, W - 1 - margin),
                    rng.uniform(margin, H - 1 - margin),
                    rng.uniform(0.0, 2.0 * std::numbers::pi)};
    const double speed = rng.uniform(sc.min_speed, sc.max_speed);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
    seq.sprite_poses.push_back(pose);
    for (int t = 1; t < L; ++t) {
      const bool frozen = cfg.static_interval &&
                          cfg.static_interval->first <= t - 1 &&
                          t <= cfg.static_interval->last;
      if (!frozen) {
        pose.cx += vx;
        pose.cy += vy;
        if (pose.cx < margin || pose.cx > W - 1 - margin) {
          vx = -vx;
          pose.cx = std::clamp(pose.cx, margin, W - 1 - margin);
        }
        if (pose.cy < margin || pose.cy > H - 1 - margin) {
          vy = -vy;
          pose.cy = std::clamp(pose.cy, margin, H - 1 - margin);
        }
        pose.angle += sc.rotation_speed;
      }
      seq.sprite_poses.push_back(pose);
    }
  }

  auto in_sprite = [&](int t, double px, double py) {
    if (!sc.enabled) return false;
    const Point2 l = to_sprite_local(seq.sprite_poses[t], px, py);
    return outline.contains(l.x, l.y);
  };

  for (int t = 0; t < L; ++t) {
    ImageBuffer frame(W, H, 3);
    SegMask mask(W, H);
    const double gain = 1.0 + cfg.brightness_drift * t;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        std::array<double, 3> rgb;
        if (in_sprite(t, x, y)) {
          mask.set(x, y, true);
          const Point2 l = to_sprite_local(seq.sprite_poses[t], x, y);
          rgb = sprite_texture(l.x, l.y);
        } else {
          const Point2 u =
              frame_to_texture[t].apply(pixel_to_normalized(x, y, W, H));
          rgb = background(u.x / kCrop, u.y / kCrop);
        }
        for (int c = 0; c < 3; ++c)
          frame.set(x, y, c, static_cast<float>(gain * rgb[c]));
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.gt_masks.push_back(std::move(mask));
  }

  for (int t = 0; t + 1 < L; ++t) {
    FlowField flow(W, H);
    const Homography& hb = seq.gt_homographies[t];
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        Point2 dest;
        if (seq.gt_masks[t].at(x, y)) {
          dest = from_sprite_local(seq.sprite_poses[t + 1],
                                   to_sprite_local(seq.sprite_poses[t], x, y));
        } else {
          dest = normalized_to_pixel(hb.apply(pixel_to_normalized(x, y, W, H)),
                                     W, H);
        }
        flow.set(x, y, static_cast<float>(dest.x - x),
                 static_cast<float>(dest.y - y));
      }
    }
    seq.gt_flows.push_back(std::move(flow));
  }

  seq.gt_inlier_maps = gt_inlier_map(seq, cfg.grid_m, cfg.grid_n);
  return seq;
}

}  // namespace camo

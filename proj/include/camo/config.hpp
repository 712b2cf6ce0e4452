#pragma once

// The single configuration document that drives the command-line tool, and
// JSON encodings of the library's result types.
//
// Configs are JSON objects whose sections mirror the library config structs.
// Every key is optional; missing keys keep their defaults and unknown keys
// are rejected so typos do not silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "camo/error.hpp"
#include "camo/eval.hpp"
#include "camo/registration.hpp"
#include "camo/segmentation.hpp"
#include "camo/synthgen.hpp"

namespace camo {

using Json = nlohmann::json;

struct IoConfig {
  // Output directory; empty means "derive from the environment or the
  // command".
  std::string output;
  // Write per-pair montage panels when segmenting.
  bool montage = false;
};

struct PipelineConfig {
  RegistrationConfig registration;
  SegmentationConfig segmentation;
  SynthConfig synth;
  EvalConfig eval;
  IoConfig io;
  Estimator estimator = Estimator::kIrls;
  int jobs = 1;
  std::uint64_t seed = 0;

  void validate() const {
    registration.validate();
    segmentation.validate();
    synth.validate();
    check(!eval.contour_tolerance || *eval.contour_tolerance >= 0.0,
          ErrorCode::kConfigInvalid, "contour tolerance must be >= 0");
    check(jobs >= 1, ErrorCode::kConfigInvalid, "jobs must be >= 1");
  }

  PipelineOptions pipeline_options() const {
    PipelineOptions o;
    o.registration = registration;
    o.registration.seed = seed;
    o.segmentation = segmentation;
    o.estimator = estimator;
    o.jobs = jobs;
    return o;
  }

  SynthConfig synth_config() const {
    SynthConfig s = synth;
    s.seed = seed;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Enum names

inline std::string to_string(Estimator e) {
  return e == Estimator::kIrls ? "irls" : "ransac";
}
inline std::string to_string(ThresholdMode m) {
  return m == ThresholdMode::kOtsu ? "otsu" : "fixed";
}
inline std::string to_string(CameraMode m) {
  return m == CameraMode::kContinuous ? "continuous" : "random";
}
inline std::string to_string(SpriteShape s) {
  return s == SpriteShape::kEllipse ? "ellipse" : "polygon";
}
inline std::string to_string(AllMotionRule r) {
  return r == AllMotionRule::kFrameMean ? "frame_mean" : "mean_of_means";
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "irls") return Estimator::kIrls;
  if (s == "ransac") return Estimator::kRansac;
  fail(ErrorCode::kConfigInvalid, "unknown estimator: " + s);
}
inline ThresholdMode parse_threshold_mode(const std::string& s) {
  if (s == "otsu") return ThresholdMode::kOtsu;
  if (s == "fixed") return ThresholdMode::kFixed;
  fail(ErrorCode::kConfigInvalid, "unknown threshold mode: " + s);
}
inline CameraMode parse_camera_mode(const std::string& s) {
  if (s == "continuous") return CameraMode::kContinuous;
  if (s == "random") return CameraMode::kRandom;
  fail(ErrorCode::kConfigInvalid, "unknown camera mode: " + s);
}
inline SpriteShape parse_sprite_shape(const std::string& s) {
  if (s == "ellipse") return SpriteShape::kEllipse;
  if (s == "polygon") return SpriteShape::kPolygon;
  fail(ErrorCode::kConfigInvalid, "unknown sprite shape: " + s);
}
inline AllMotionRule parse_all_motion_rule(const std::string& s) {
  if (s == "frame_mean") return AllMotionRule::kFrameMean;
  if (s == "mean_of_means") return AllMotionRule::kMeanOfMeans;
  fail(ErrorCode::kConfigInvalid, "unknown aggregation rule: " + s);
}

// ---------------------------------------------------------------------------
// Config <-> JSON

inline Json to_json(const RegistrationConfig& c) {
  return {{"gamma", c.gamma},
          {"tau", c.tau},
          {"epsilon", c.epsilon},
          {"grid_m", c.grid_m},
          {"grid_n", c.grid_n},
          {"max_iterations", c.max_iterations},
          {"step_size", c.step_size},
          {"convergence_tolerance", c.convergence_tolerance},
          {"ransac_iterations", c.ransac_iterations},
          {"ransac_threshold", c.ransac_threshold},
          {"weight_floor", c.weight_floor}};
}

inline Json to_json(const SegmentationConfig& c) {
  return {{"alpha", c.alpha},
          {"threshold_mode", to_string(c.threshold_mode)},
          {"fixed_threshold", c.fixed_threshold},
          {"min_area_fraction", c.min_area_fraction},
          {"window", c.window},
          {"flat_epsilon", c.flat_epsilon}};
}

inline Json to_json(const SynthConfig& c) {
  Json j = {{"mode", to_string(c.mode)},
            {"width", c.width},
            {"height", c.height},
            {"length", c.length},
            {"jitter", c.jitter},
            {"static_interval", nullptr},
            {"brightness_drift", c.brightness_drift},
            {"grid_m", c.grid_m},
            {"grid_n", c.grid_n},
            {"sprite",
             {{"enabled", c.sprite.enabled},
              {"shape", to_string(c.sprite.shape)},
              {"min_radius", c.sprite.min_radius},
              {"max_radius", c.sprite.max_radius},
              {"min_aspect", c.sprite.min_aspect},
              {"max_aspect", c.sprite.max_aspect},
              {"min_speed", c.sprite.min_speed},
              {"max_speed", c.sprite.max_speed},
              {"rotation_speed", c.sprite.rotation_speed}}}};
  if (c.static_interval)
    j["static_interval"] = {c.static_interval->first, c.static_interval->last};
  return j;
}

inline Json to_json(const EvalConfig& c) {
  Json j = {{"contour_tolerance", nullptr},
            {"all_motion_rule", to_string(c.all_motion_rule)}};
  if (c.contour_tolerance) j["contour_tolerance"] = *c.contour_tolerance;
  return j;
}

inline Json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"jobs", c.jobs},
          {"estimator", to_string(c.estimator)},
          {"registration", to_json(c.registration)},
          {"segmentation", to_json(c.segmentation)},
          {"synth", to_json(c.synth)},
          {"eval", to_json(c.eval)},
          {"io", {{"output", c.io.output}, {"montage", c.io.montage}}}};
}

namespace detail {

// Reads keys out of one JSON object and remembers which were used, so the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    check(j.is_object(), ErrorCode::kConfigInvalid,
          "'" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::kConfigInvalid, "bad value for '" + name(key) + "'");
    }
  }

  template <typename T, typename Parse>
  void read_enum(const char* key, T& out, Parse parse) {
    std::string s;
    bool present = j_.contains(key);
    read(key, s);
    if (present) out = parse(s);
  }

  const Json* child(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key))
        fail(ErrorCode::kConfigInvalid, "unknown config key '" + name(key) + "'");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void read_registration(const Json& j, RegistrationConfig& c) {
  Section s(j, "registration");
  s.read("gamma", c.gamma);
  s.read("tau", c.tau);
  s.read("epsilon", c.epsilon);
  s.read("grid_m", c.grid_m);
  s.read("grid_n", c.grid_n);
  s.read("max_iterations", c.max_iterations);
  s.read("step_size", c.step_size);
  s.read("convergence_tolerance", c.convergence_tolerance);
  s.read("ransac_iterations", c.ransac_iterations);
  s.read("ransac_threshold", c.ransac_threshold);
  s.read("weight_floor", c.weight_floor);
  s.finish();
}

inline void read_segmentation(const Json& j, SegmentationConfig& c) {
  Section s(j, "segmentation");
  s.read("alpha", c.alpha);
  s.read_enum("threshold_mode", c.threshold_mode, parse_threshold_mode);
  s.read("fixed_threshold", c.fixed_threshold);
  s.read("min_area_fraction", c.min_area_fraction);
  s.read("window", c.window);
  s.read("flat_epsilon", c.flat_epsilon);
  s.finish();
}

inline void read_synth(const Json& j, SynthConfig& c) {
  Section s(j, "synth");
  s.read_enum("mode", c.mode, parse_camera_mode);
  s.read("width", c.width);
  s.read("height", c.height);
  s.read("length", c.length);
  s.read("jitter", c.jitter);
  if (const Json* iv = s.child("static_interval")) {
    if (iv->is_null()) {
      c.static_interval.reset();
    } else {
      check(iv->is_array() && iv->size() == 2 && (*iv)[0].is_number_integer() &&
                (*iv)[1].is_number_integer(),
            ErrorCode::kConfigInvalid,
            "'synth.static_interval' must be null or [first, last]");
      c.static_interval = StaticInterval{(*iv)[0].get<int>(), (*iv)[1].get<int>()};
    }
  }
  s.read("brightness_drift", c.brightness_drift);
  s.read("grid_m", c.grid_m);
  s.read("grid_n", c.grid_n);
  if (const Json* sp = s.child("sprite")) {
    Section t(*sp, "synth.sprite");
    t.read("enabled", c.sprite.enabled);
    t.read_enum("shape", c.sprite.shape, parse_sprite_shape);
    t.read("min_radius", c.sprite.min_radius);
    t.read("max_radius", c.sprite.max_radius);
    t.read("min_aspect", c.sprite.min_aspect);
    t.read("max_aspect", c.sprite.max_aspect);
    t.read("min_speed", c.sprite.min_speed);
    t.read("max_speed", c.sprite.max_speed);
    t.read("rotation_speed", c.sprite.rotation_speed);
    t.finish();
  }
  s.finish();
}

inline void read_eval(const Json& j, EvalConfig& c) {
  Section s(j, "eval");
  if (const Json* tol = s.child("contour_tolerance")) {
    if (tol->is_null()) c.contour_tolerance.reset();
    else if (tol->is_number()) c.contour_tolerance = tol->get<double>();
    else fail(ErrorCode::kConfigInvalid, "bad value for 'eval.contour_tolerance'");
  }
  s.read_enum("all_motion_rule", c.all_motion_rule, parse_all_motion_rule);
  s.finish();
}

}  // namespace detail

/// Overlays the keys present in `j` onto `cfg`. Does not validate.
inline void apply_json(const Json& j, PipelineConfig& cfg) {
  detail::Section s(j, "");
  s.read("seed", cfg.seed);
  s.read("jobs", cfg.jobs);
  s.read_enum("estimator", cfg.estimator, parse_estimator);
  if (const Json* c = s.child("registration"))
    detail::read_registration(*c, cfg.registration);
  if (const Json* c = s.child("segmentation"))
    detail::read_segmentation(*c, cfg.segmentation);
  if (const Json* c = s.child("synth")) detail::read_synth(*c, cfg.synth);
  if (const Json* c = s.child("eval")) detail::read_eval(*c, cfg.eval);
  if (const Json* c = s.child("io")) {
    detail::Section io(*c, "io");
    io.read("output", cfg.io.output);
    io.read("montage", cfg.io.montage);
    io.finish();
  }
  s.finish();
}

inline PipelineConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  apply_json(j, cfg);
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingInput, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Results -> JSON

inline Json to_json(const Homography& h) {
  const auto c = h.coefficients();
  return Json(std::vector<double>(c.begin(), c.end()));
}

/// Row-major 3x3 nested arrays.
inline Json to_json_3x3(const Homography& h) {
  const auto c = h.coefficients();
  return {{c[0], c[1], c[2]}, {c[3], c[4], c[5]}, {c[6], c[7], c[8]}};
}

inline Homography homography_from_json(const Json& j) {
  std::vector<double> c;
  try {
    if (j.is_array() && j.size() == 3 && j[0].is_array()) {
      for (const auto& row : j)
        for (const auto& v : row) c.push_back(v.get<double>());
    } else {
      c = j.get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kInvalidArgument, "homography must be 9 numbers");
  }
  check(c.size() == 9, ErrorCode::kInvalidArgument, "homography must be 9 numbers");
  return Homography::from_coefficients(c);
}

inline Json to_json(const RegistrationResult& r) {
  return {{"homography", to_json(r.homography)},
          {"weights", r.weights.values()},
          {"loss", r.loss},
          {"iterations", r.iterations},
          {"converged", r.converged}};
}

namespace detail {
inline Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}
}  // namespace detail

inline Json to_json(const MetricSummary& s) {
  return {{"locomotion", detail::optional_json(s.locomotion)},
          {"deformation", detail::optional_json(s.deformation)},
          {"all_motion", detail::optional_json(s.all_motion)},
          {"recall", detail::optional_json(s.recall)}};
}

inline Json to_json(const EvalReport& r) {
  auto block = [](const std::optional<MetricSummary>& s) {
    return s ? to_json(*s) : Json(nullptr);
  };
  return {{"empty", r.empty},
          {"scored_frames", r.scored_frames},
          {"j", block(r.j)},
          {"f", block(r.f)},
          {"box_iou", block(r.box_iou)}};
}

inline Json to_json(const FrameScore& s, MotionLabel label) {
  return {{"frame", s.frame},
          {"label", std::string(to_string(label))},
          {"j", detail::optional_json(s.j)},
          {"f", detail::optional_json(s.f)},
          {"box_iou", detail::optional_json(s.box_iou)}};
}

}  // namespace camo

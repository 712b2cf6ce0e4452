#pragma once

// On-disk sequence directories and box annotations.
//
// A sequence directory holds frame_%04d.png (L frames), flow_%04d.flo (L-1
// forward flows), optionally mask_%04d.png ground truth, and for generated
// sequences homographies.json, inliers.json and meta.json. Every file is
// written to a temporary name first and then renamed into place.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "camo/config.hpp"
#include "camo/error.hpp"
#include "camo/eval.hpp"
#include "camo/flow.hpp"
#include "camo/image.hpp"
#include "camo/png_io.hpp"
#include "camo/synthgen.hpp"

namespace camo {

namespace fs = std::filesystem;

/// "prefix_0007.ext"
inline std::string indexed_name(const std::string& prefix, int index,
                                const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04d", index);
  return prefix + buf + ext;
}

/// Calls `write(tmp)` and renames tmp onto `path`; a failed writer leaves no
/// partial file behind.
inline void write_atomically(const fs::path& path,
                             const std::function<void(const fs::path&)>& write) {
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    write(tmp);
    fs::rename(tmp, path);
  } catch (const fs::filesystem_error& e) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    fail(ErrorCode::kIo, e.what());
  } catch (...) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw;
  }
}

inline void write_text_atomically(const fs::path& path, const std::string& text) {
  write_atomically(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    out.close();
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  });
}

inline void write_json_atomically(const fs::path& path, const Json& j) {
  write_text_atomically(path, j.dump(2) + "\n");
}

inline Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingInput, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    fail(ErrorCode::kIo, "cannot create output directory " + dir.string());
}

/// Writes every artifact of a generated sequence into `dir`.
inline void write_sequence(const SyntheticSequence& seq, const fs::path& dir) {
  ensure_directory(dir);
  const int length = static_cast<int>(seq.frames.size());
  for (int t = 0; t < length; ++t) {
    write_atomically(dir / indexed_name("frame", t, ".png"),
                     [&](const fs::path& p) { write_png(seq.frames[t], p); });
    write_atomically(dir / indexed_name("mask", t, ".png"),
                     [&](const fs::path& p) { write_mask_png(seq.gt_masks[t], p); });
  }
  for (int t = 0; t + 1 < length; ++t)
    write_atomically(dir / indexed_name("flow", t, ".flo"),
                     [&](const fs::path& p) { write_flo(seq.gt_flows[t], p); });

  Json hs = Json::array();
  for (const auto& h : seq.gt_homographies) hs.push_back(to_json_3x3(h));
  Json quads = Json::array();
  for (const auto& q : seq.pair_quads) {
    Json corners = Json::array();
    for (const auto& p : q) corners.push_back({p.x, p.y});
    quads.push_back(std::move(corners));
  }
  write_json_atomically(dir / "homographies.json",
                        {{"homographies", std::move(hs)}, {"pair_quads", std::move(quads)}});

  Json maps = Json::array();
  for (const auto& m : seq.gt_inlier_maps) {
    std::vector<int> bits(m.begin(), m.end());
    maps.push_back(std::move(bits));
  }
  write_json_atomically(dir / "inliers.json", {{"grid_m", seq.config.grid_m},
                                               {"grid_n", seq.config.grid_n},
                                               {"inliers", std::move(maps)}});

  write_json_atomically(dir / "meta.json", {{"seed", seq.config.seed},
                                            {"config", to_json(seq.config)}});
}

/// A sequence read back from disk.
struct SequenceData {
  std::vector<ImageBuffer> frames;
  std::vector<FlowField> flows;
  // Empty when the directory carries no ground-truth masks.
  std::vector<SegMask> gt_masks;
  std::optional<std::vector<Homography>> gt_homographies;
};

inline std::vector<Homography> read_homographies(const fs::path& path) {
  const Json j = read_json_file(path);
  check(j.contains("homographies") && j["homographies"].is_array(),
        ErrorCode::kInvalidArgument, path.string() + " has no homography list");
  std::vector<Homography> out;
  for (const auto& h : j["homographies"]) out.push_back(homography_from_json(h));
  return out;
}

/// Loads frames until the first missing index, the matching flows, and the
/// optional ground truth. A missing flow is reported with its pair index.
inline SequenceData load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir))
    fail(ErrorCode::kMissingInput, "not a sequence directory: " + dir.string());
  SequenceData s;
  for (int t = 0;; ++t) {
    const fs::path p = dir / indexed_name("frame", t, ".png");
    if (!fs::exists(p)) break;
    s.frames.push_back(read_png(p));
  }
  check(s.frames.size() >= 2, ErrorCode::kMissingInput,
        "sequence needs at least frame_0000.png and frame_0001.png in " +
            dir.string());
  for (std::size_t t = 0; t < s.frames.size(); ++t)
    check(s.frames[t].width() == s.frames[0].width() &&
              s.frames[t].height() == s.frames[0].height(),
          ErrorCode::kDimensionMismatch,
          "frame " + std::to_string(t) + " differs in size from frame 0");

  for (int t = 0; t + 1 < static_cast<int>(s.frames.size()); ++t) {
    const fs::path p = dir / indexed_name("flow", t, ".flo");
    try {
      s.flows.push_back(read_flo(p));
    } catch (const Error& e) {
      throw e.with_frame(t);
    }
    if (s.flows.back().width() != s.frames[0].width() ||
        s.flows.back().height() != s.frames[0].height())
      throw Error(ErrorCode::kDimensionMismatch,
                  "flow size differs from frame size in " + p.string())
          .with_frame(t);
  }

  if (fs::exists(dir / indexed_name("mask", 0, ".png"))) {
    for (int t = 0; t < static_cast<int>(s.frames.size()); ++t) {
      const fs::path p = dir / indexed_name("mask", t, ".png");
      if (!fs::exists(p)) break;
      s.gt_masks.push_back(read_mask_png(p));
    }
  }
  if (fs::exists(dir / "homographies.json"))
    s.gt_homographies = read_homographies(dir / "homographies.json");
  return s;
}

/// Reads mask_%04d.png for indices 0..count-1; returns the missing indices
/// through `missing` instead of failing on the first.
inline std::vector<SegMask> load_masks(const fs::path& dir, int count,
                                       std::vector<int>& missing) {
  std::vector<SegMask> masks;
  for (int t = 0; t < count; ++t) {
    const fs::path p = dir / indexed_name("mask", t, ".png");
    if (!fs::exists(p)) {
      missing.push_back(t);
      masks.emplace_back();
      continue;
    }
    masks.push_back(read_mask_png(p));
  }
  return masks;
}

/// Number of consecutive mask_%04d.png files starting at index 0.
inline int count_masks(const fs::path& dir) {
  int n = 0;
  while (fs::exists(dir / indexed_name("mask", n, ".png"))) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Box annotations

struct AnnotationRow {
  int frame = 0;
  BoundingBox box;
  MotionLabel label = MotionLabel::kLocomotion;
};

/// Parses `frame,x_min,y_min,x_max,y_max,label` rows. A first line that does
/// not start with a digit is treated as a header. Rows are sorted by frame.
inline std::vector<AnnotationRow> parse_annotations(const std::string& text) {
  std::vector<AnnotationRow> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::size_t first = line.find_first_not_of(" \t");
    if (line_no == 1 && !std::isdigit(static_cast<unsigned char>(line[first])))
      continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      const auto b = field.find_first_not_of(" \t");
      const auto e = field.find_last_not_of(" \t");
      fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    const std::string where = "annotation line " + std::to_string(line_no);
    check(fields.size() == 6, ErrorCode::kInvalidArgument,
          where + ": expected 6 comma-separated fields");
    AnnotationRow row;
    try {
      std::size_t used = 0;
      row.frame = std::stoi(fields[0], &used);
      check(used == fields[0].size(), ErrorCode::kInvalidArgument,
            where + ": bad frame index");
      double* coords[] = {&row.box.x_min, &row.box.y_min, &row.box.x_max,
                          &row.box.y_max};
      for (int k = 0; k < 4; ++k) {
        *coords[k] = std::stod(fields[1 + k], &used);
        check(used == fields[1 + k].size(), ErrorCode::kInvalidArgument,
              where + ": bad coordinate");
      }
    } catch (const std::logic_error&) {
      fail(ErrorCode::kInvalidArgument, where + ": bad number");
    }
    check(row.frame >= 0, ErrorCode::kInvalidArgument,
          where + ": negative frame index");
    row.label = parse_motion_label(fields[5]);
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AnnotationRow& a, const AnnotationRow& b) {
                     return a.frame < b.frame;
                   });
  for (std::size_t i = 1; i < rows.size(); ++i)
    check(rows[i].frame != rows[i - 1].frame, ErrorCode::kInvalidArgument,
          "duplicate annotation for frame " + std::to_string(rows[i].frame));
  check(!rows.empty(), ErrorCode::kEmptyKeyframes, "annotation file has no rows");
  return rows;
}

inline std::vector<AnnotationRow> read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingInput, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str());
}

/// Dense per-frame boxes and labels over [0, frame_count). Boxes are
/// interpolated between keyframes; each frame takes the label of the latest
/// keyframe at or before it (the first keyframe's label before that).
struct DenseAnnotations {
  std::vector<BoundingBox> boxes;
  std::vector<MotionLabel> labels;
};

inline DenseAnnotations densify(const std::vector<AnnotationRow>& rows,
                                int frame_count) {
  std::vector<Keyframe> keys;
  keys.reserve(rows.size());
  for (const auto& r : rows) keys.push_back({r.frame, r.box});
  DenseAnnotations d;
  d.boxes = interpolate_boxes(keys, frame_count);
  d.labels.resize(static_cast<std::size_t>(frame_count));
  std::size_t k = 0;
  for (int f = 0; f < frame_count; ++f) {
    while (k + 1 < rows.size() && rows[k + 1].frame <= f) ++k;
    d.labels[f] = rows[k].label;
  }
  return d;
}

}  // namespace camo

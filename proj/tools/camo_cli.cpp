// Command-line front end: synth | register | segment | eval | flow-vis.
//
// Exit status: 0 on success, 2 for bad input or configuration, 1 for
// anything else. Failures print a single JSON object on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "camo/camo.hpp"

namespace {

using camo::Error;
using camo::ErrorCode;
using camo::Json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

// Options shared by every subcommand.
struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string estimator;
  std::string output;
  bool print_config = false;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  o.seed_opt = cmd->add_option("--seed", o.seed, "random seed");
  o.jobs_opt = cmd->add_option("--jobs", o.jobs, "worker threads")
                   ->check(CLI::PositiveNumber);
  cmd->add_option("--estimator", o.estimator, "registration estimator")
      ->check(CLI::IsMember({"irls", "ransac"}));
  cmd->add_option("--output", o.output, "output location");
  cmd->add_flag("--print-config", o.print_config,
                "print the effective configuration and exit");
}

camo::PipelineConfig resolve_config(const CommonOptions& o) {
  camo::PipelineConfig cfg;
  if (!o.config_path.empty()) cfg = camo::load_config(o.config_path);
  if (o.seed_opt && o.seed_opt->count()) cfg.seed = o.seed;
  if (o.jobs_opt && o.jobs_opt->count()) cfg.jobs = o.jobs;
  if (!o.estimator.empty()) cfg.estimator = camo::parse_estimator(o.estimator);
  if (!o.output.empty()) cfg.io.output = o.output;
  return cfg;
}

// Explicit --output / io.output, else $CAMO_OUTPUT_ROOT/<fallback_name>,
// else ./camo_output/<fallback_name>.
fs::path output_dir(const camo::PipelineConfig& cfg,
                    const std::string& fallback_name) {
  if (!cfg.io.output.empty()) return cfg.io.output;
  const char* root = std::getenv("CAMO_OUTPUT_ROOT");
  const fs::path base = (root && *root) ? fs::path(root) : fs::path("camo_output");
  return base / fallback_name;
}

std::string leaf_name(const fs::path& p) {
  fs::path clean = p.lexically_normal();
  if (clean.filename().empty()) clean = clean.parent_path();
  const std::string name = clean.filename().string();
  return name.empty() || name == "." ? "input" : name;
}

void refuse_same_directory(const fs::path& input, const fs::path& output) {
  std::error_code ec;
  if (fs::exists(output) && fs::equivalent(input, output, ec))
    throw Error(ErrorCode::kInvalidArgument,
                "output directory must differ from the input directory");
}

camo::ImageBuffer to_rgb(const camo::ImageBuffer& img) {
  if (img.channels() == 3) return img;
  camo::ImageBuffer out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.set(x, y, c, img.at(x, y, 0));
  return out;
}

camo::ImageBuffer mask_image(const camo::BinaryMask& m) {
  camo::ImageBuffer out(m.width(), m.height(), 1);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out.set(x, y, 0, m.at(x, y) ? 1.0f : 0.0f);
  return out;
}

// Panels stacked top to bottom.
camo::ImageBuffer stack_vertically(const std::vector<camo::ImageBuffer>& panels) {
  const int w = panels.front().width(), h = panels.front().height();
  camo::ImageBuffer out(w, h * static_cast<int>(panels.size()), 3);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const camo::ImageBuffer rgb = to_rgb(panels[k]);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          out.set(x, static_cast<int>(k) * h + y, c, rgb.at(x, y, c));
  }
  return out;
}

// Weights on the m x n grid, blown up to the frame by nearest neighbour.
camo::ImageBuffer weight_image(const camo::WeightMap& w, int m, int n,
                               int width, int height) {
  camo::ImageBuffer out(width, height, 1);
  for (int y = 0; y < height; ++y) {
    const int row = std::min(n - 1, static_cast<int>(
                                        static_cast<long long>(y) * n / height));
    for (int x = 0; x < width; ++x) {
      const int col = std::min(m - 1, static_cast<int>(
                                          static_cast<long long>(x) * m / width));
      out.set(x, y, 0, static_cast<float>(w[static_cast<std::size_t>(row) * m + col]));
    }
  }
  return out;
}

bool maybe_print_config(const CommonOptions& o, const camo::PipelineConfig& cfg) {
  if (!o.print_config) return false;
  std::cout << camo::to_json(cfg).dump(2) << "\n";
  return true;
}

// Runs fn(t) for every pair; failures carry the pair index.
template <typename Fn>
void for_each_pair(std::size_t pairs, int jobs, Fn fn) {
  camo::parallel_for(pairs, jobs, [&](std::size_t t) {
    try {
      fn(t);
    } catch (const Error& e) {
      if (e.frame()) throw;
      throw e.with_frame(static_cast<int>(t));
    }
  });
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOptions& o, const std::string& mode,
              std::optional<int> length, const std::string& static_spec) {
  camo::PipelineConfig cfg = resolve_config(o);
  if (!mode.empty()) cfg.synth.mode = camo::parse_camera_mode(mode);
  if (length) cfg.synth.length = *length;
  if (!static_spec.empty()) {
    const auto colon = static_spec.find(':');
    int a = 0, b = 0;
    try {
      if (colon == std::string::npos) throw std::invalid_argument("no colon");
      std::size_t used_a = 0, used_b = 0;
      a = std::stoi(static_spec.substr(0, colon), &used_a);
      b = std::stoi(static_spec.substr(colon + 1), &used_b);
      if (used_a != colon || used_b != static_spec.size() - colon - 1)
        throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kConfigInvalid,
                  "--static expects FIRST:LAST, got '" + static_spec + "'");
    }
    cfg.synth.static_interval = camo::StaticInterval{a, b};
  }
  if (maybe_print_config(o, cfg)) return kExitOk;
  cfg.validate();
  const camo::SyntheticSequence seq = camo::generate_sequence(cfg.synth_config());
  const fs::path out = output_dir(cfg, "synth_seed" + std::to_string(cfg.seed));
  camo::write_sequence(seq, out);
  std::cout << "wrote " << seq.frames.size() << " frames to " << out.string() << "\n";
  return kExitOk;
}

int cmd_register(const CommonOptions& o, const std::string& input) {
  camo::PipelineConfig cfg = resolve_config(o);
  if (maybe_print_config(o, cfg)) return kExitOk;
  cfg.validate();
  const fs::path out = output_dir(cfg, "register_" + leaf_name(input));
  refuse_same_directory(input, out);
  const camo::SequenceData seq = camo::load_sequence(input);
  camo::ensure_directory(out);

  const camo::PipelineOptions opts = cfg.pipeline_options();
  const std::size_t pairs = seq.flows.size();
  const int w = seq.frames[0].width(), h = seq.frames[0].height();
  std::vector<camo::Homography> estimates(pairs);
  for_each_pair(pairs, cfg.jobs, [&](std::size_t t) {
    const camo::RegistrationResult r = camo::register_pair(seq.flows[t], opts);
    const camo::DiffResult d =
        camo::align_and_diff(seq.frames[t], seq.frames[t + 1], r.homography);
    const int i = static_cast<int>(t);
    camo::write_json_atomically(out / camo::indexed_name("registration", i, ".json"),
                                camo::to_json(r));
    camo::write_atomically(out / camo::indexed_name("diff", i, ".png"),
                           [&](const fs::path& p) { camo::write_png(d.diff, p); });
    const camo::ImageBuffer weights = weight_image(
        r.weights, opts.registration.grid_m, opts.registration.grid_n, w, h);
    camo::write_atomically(out / camo::indexed_name("inliers", i, ".png"),
                           [&](const fs::path& p) { camo::write_png(weights, p); });
    estimates[t] = r.homography;
  });

  Json summary = {{"pairs", pairs},
                  {"estimator", camo::to_string(cfg.estimator)},
                  {"seed", cfg.seed}};
  if (seq.gt_homographies) {
    if (seq.gt_homographies->size() != pairs)
      throw Error(ErrorCode::kLengthMismatch,
                  "homographies.json lists " +
                      std::to_string(seq.gt_homographies->size()) +
                      " pairs but the sequence has " + std::to_string(pairs));
    std::vector<double> errors;
    double worst = 0.0, total = 0.0;
    for (std::size_t t = 0; t < pairs; ++t) {
      const double e = camo::corner_transfer_error_px(
          estimates[t], (*seq.gt_homographies)[t], w, h);
      errors.push_back(e);
      worst = std::max(worst, e);
      total += e;
    }
    summary["corner_error_px"] = errors;
    summary["max_corner_error_px"] = worst;
    summary["mean_corner_error_px"] = total / static_cast<double>(pairs);
  }
  camo::write_json_atomically(out / "summary.json", summary);
  std::cout << "registered " << pairs << " pairs into " << out.string() << "\n";
  return kExitOk;
}

int cmd_segment(const CommonOptions& o, const std::string& input, bool montage) {
  camo::PipelineConfig cfg = resolve_config(o);
  if (montage) cfg.io.montage = true;
  if (maybe_print_config(o, cfg)) return kExitOk;
  cfg.validate();
  const fs::path out = output_dir(cfg, "segment_" + leaf_name(input));
  refuse_same_directory(input, out);
  const camo::SequenceData seq = camo::load_sequence(input);
  camo::ensure_directory(out);

  const camo::SequenceSegmentation result =
      camo::segment_sequence_detailed(seq.frames, seq.flows, cfg.pipeline_options());
  const std::size_t pairs = result.masks.size();
  for_each_pair(pairs, cfg.jobs, [&](std::size_t t) {
    const int i = static_cast<int>(t);
    camo::write_atomically(out / camo::indexed_name("mask", i, ".png"),
                           [&](const fs::path& p) {
                             camo::write_mask_png(result.masks[t], p);
                           });
    if (cfg.io.montage) {
      const auto& pair = result.pairs[t];
      const camo::ImageBuffer panel = stack_vertically(
          {seq.frames[t], seq.frames[t + 1], camo::flow_to_color(seq.flows[t]),
           pair.diff.diff, mask_image(result.masks[t])});
      camo::write_atomically(out / camo::indexed_name("montage", i, ".png"),
                             [&](const fs::path& p) { camo::write_png(panel, p); });
    }
  });

  if (seq.gt_masks.size() >= pairs) {
    // Ground truth carries no motion labels; every pair counts as locomotion.
    std::vector<camo::FrameScore> scores;
    std::vector<camo::MotionLabel> labels(pairs, camo::MotionLabel::kLocomotion);
    Json frames = Json::array();
    const int w = seq.frames[0].width(), h = seq.frames[0].height();
    const double tol = cfg.eval.contour_tolerance.value_or(
        camo::default_contour_tolerance(w, h));
    for (std::size_t t = 0; t < pairs; ++t) {
      const camo::SegMask& gt = seq.gt_masks[t];
      camo::FrameScore s;
      s.frame = static_cast<int>(t);
      s.j = camo::region_similarity_J(result.masks[t], gt);
      s.f = camo::contour_accuracy_F(result.masks[t], gt, tol);
      s.box_iou = camo::moca_box_iou(result.masks[t], camo::min_enclosing_box(gt));
      frames.push_back(camo::to_json(s, labels[t]));
      scores.push_back(s);
    }
    const camo::EvalReport report =
        camo::aggregate(scores, labels, cfg.eval.all_motion_rule);
    camo::write_json_atomically(out / "report.json",
                                {{"frames", frames}, {"aggregate", camo::to_json(report)}});
    std::cout << "mean J " << report.j->all_motion.value_or(0.0) << ", mean box IoU "
              << report.box_iou->all_motion.value_or(0.0) << "\n";
  }
  std::cout << "wrote " << pairs << " masks to " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOptions& o, const std::string& pred_dir,
             const std::string& annotations, const std::string& gt_dir) {
  camo::PipelineConfig cfg = resolve_config(o);
  if (maybe_print_config(o, cfg)) return kExitOk;
  cfg.validate();
  if (annotations.empty() && gt_dir.empty())
    throw Error(ErrorCode::kMissingInput, "eval needs --annotations and/or --gt");
  if (!fs::is_directory(pred_dir))
    throw Error(ErrorCode::kMissingInput, "not a directory: " + pred_dir);
  const fs::path out = output_dir(cfg, "eval_" + leaf_name(pred_dir));

  std::optional<camo::DenseAnnotations> dense;
  int frame_count = 0;
  if (!annotations.empty()) {
    const auto rows = camo::read_annotations(annotations);
    frame_count = rows.back().frame + 1;
    dense = camo::densify(rows, frame_count);
  } else {
    frame_count = camo::count_masks(gt_dir);
    if (frame_count == 0)
      throw Error(ErrorCode::kMissingInput, "no ground-truth masks in " + gt_dir);
  }
  const std::vector<camo::MotionLabel> labels =
      dense ? dense->labels
            : std::vector<camo::MotionLabel>(frame_count, camo::MotionLabel::kLocomotion);

  const bool all_static =
      std::all_of(labels.begin(), labels.end(),
                  [](camo::MotionLabel l) { return l == camo::MotionLabel::kStatic; });
  if (all_static) {
    camo::ensure_directory(out);
    const camo::EvalReport report = camo::aggregate(
        std::vector<camo::FrameScore>(labels.size()), labels, cfg.eval.all_motion_rule);
    camo::write_json_atomically(out / "report.json",
                                {{"frames", Json::array()},
                                 {"aggregate", camo::to_json(report)}});
    std::cout << "every annotated frame is static; nothing to score\n";
    return kExitOk;
  }

  std::vector<int> missing_pred, missing_gt;
  const auto preds = camo::load_masks(pred_dir, frame_count, missing_pred);
  std::vector<camo::SegMask> gts;
  if (!gt_dir.empty()) gts = camo::load_masks(gt_dir, frame_count, missing_gt);
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (int i : v) s += (s.empty() ? "" : ", ") + std::to_string(i);
    return s;
  };
  if (!missing_pred.empty() || !missing_gt.empty()) {
    std::string msg = "frame count mismatch;";
    if (!missing_pred.empty()) msg += " missing predictions for frames " + list(missing_pred) + ";";
    if (!missing_gt.empty()) msg += " missing ground truth for frames " + list(missing_gt) + ";";
    Error e(ErrorCode::kLengthMismatch, msg,
            missing_pred.empty() ? missing_gt.front() : missing_pred.front());
    throw e;
  }

  std::vector<camo::FrameScore> scores(frame_count);
  Json frames = Json::array();
  for (int t = 0; t < frame_count; ++t) {
    camo::FrameScore& s = scores[t];
    s.frame = t;
    try {
      if (!gts.empty()) {
        check(preds[t].same_shape(gts[t]), ErrorCode::kDimensionMismatch,
              "prediction and ground truth differ in size");
        const double tol = cfg.eval.contour_tolerance.value_or(
            camo::default_contour_tolerance(preds[t].width(), preds[t].height()));
        s.j = camo::region_similarity_J(preds[t], gts[t]);
        s.f = camo::contour_accuracy_F(preds[t], gts[t], tol);
      }
      if (dense) s.box_iou = camo::moca_box_iou(preds[t], dense->boxes[t]);
    } catch (const Error& e) {
      throw e.with_frame(t);
    }
    frames.push_back(camo::to_json(s, labels[t]));
  }
  const camo::EvalReport report = camo::aggregate(scores, labels, cfg.eval.all_motion_rule);
  camo::ensure_directory(out);
  const Json doc = {{"frames", frames}, {"aggregate", camo::to_json(report)}};
  camo::write_json_atomically(out / "report.json", doc);
  std::cout << camo::to_json(report).dump(2) << "\n";
  return kExitOk;
}

int cmd_flow_vis(const CommonOptions& o, const std::string& input) {
  camo::PipelineConfig cfg = resolve_config(o);
  if (maybe_print_config(o, cfg)) return kExitOk;
  const camo::FlowField f = camo::read_flo(input);
  fs::path out = cfg.io.output.empty() ? fs::path(input).replace_extension(".png")
                                       : fs::path(cfg.io.output);
  const camo::ImageBuffer img = camo::flow_to_color(f);
  camo::write_atomically(out, [&](const fs::path& p) { camo::write_png(img, p); });
  std::cout << "wrote " << out.string() << "\n";
  return kExitOk;
}

void report_error(ErrorCode code, const std::string& message, std::optional<int> frame) {
  Json j = {{"error",
             {{"code", std::string(camo::to_string(code))},
              {"message", message},
              {"frame", frame ? Json(*frame) : Json(nullptr)}}}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-based moving object discovery without learned weights"};
  app.require_subcommand(0, 1);
  bool print_defaults = false;
  app.add_flag("--print-config", print_defaults, "print the default configuration");

  CommonOptions synth_o, reg_o, seg_o, eval_o, vis_o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence");
  add_common(synth, synth_o);
  std::string mode, static_spec;
  int length = 0;
  synth->add_option("--mode", mode, "camera mode")
      ->check(CLI::IsMember({"continuous", "random"}));
  auto* length_opt = synth->add_option("--length", length, "number of frames");
  synth->add_option("--static", static_spec, "frames FIRST:LAST share one sprite pose");

  auto* reg = app.add_subcommand("register", "estimate background homographies");
  add_common(reg, reg_o);
  std::string reg_input;
  reg->add_option("sequence", reg_input, "sequence directory")->required();

  auto* seg = app.add_subcommand("segment", "segment the moving object");
  add_common(seg, seg_o);
  std::string seg_input;
  bool montage = false;
  seg->add_option("sequence", seg_input, "sequence directory")->required();
  seg->add_flag("--montage", montage, "also write per-pair montage panels");

  auto* ev = app.add_subcommand("eval", "score predicted masks");
  add_common(ev, eval_o);
  std::string pred_dir, annotations, gt_dir;
  ev->add_option("predictions", pred_dir, "directory of mask_%04d.png")->required();
  ev->add_option("--annotations", annotations, "box annotation CSV");
  ev->add_option("--gt", gt_dir, "directory of ground-truth mask_%04d.png");

  auto* vis = app.add_subcommand("flow-vis", "render a .flo file as color");
  add_common(vis, vis_o);
  std::string flo;
  vis->add_option("flow", flo, ".flo file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUser;
  }

  try {
    if (print_defaults) {
      std::cout << camo::to_json(camo::PipelineConfig{}).dump(2) << "\n";
      return kExitOk;
    }
    if (*synth)
      return cmd_synth(synth_o, mode,
                       length_opt->count() ? std::optional<int>(length) : std::nullopt,
                       static_spec);
    if (*reg) return cmd_register(reg_o, reg_input);
    if (*seg) return cmd_segment(seg_o, seg_input, montage);
    if (*ev) return cmd_eval(eval_o, pred_dir, annotations, gt_dir);
    if (*vis) return cmd_flow_vis(vis_o, flo);
    std::cout << app.help();
    return kExitUser;
  } catch (const Error& e) {
    report_error(e.code(), e.what(), e.frame());
    return (e.code() == ErrorCode::kIo || e.code() == ErrorCode::kInternal)
               ? kExitInternal
               : kExitUser;
  } catch (const std::exception& e) {
    report_error(ErrorCode::kInternal, std::string("internal error: ") + e.what(), std::nullopt);
    return kExitInternal;
  }
}

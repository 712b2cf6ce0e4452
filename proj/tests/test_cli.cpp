// End-to-end checks of the camo_cli binary: exit codes, artifacts and
// reproducibility. Each test works in its own scratch directory.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "camo/config.hpp"
#include "camo/flow.hpp"
#include "camo/png_io.hpp"
#include "camo/sequence_io.hpp"

namespace camo {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("camo_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // A small sequence keeps the end-to-end runs quick.
    std::ofstream(dir_ / "small.json") << R"({
      "synth": {"width": 96, "height": 96, "length": 5},
      "registration": {"grid_m": 24, "grid_n": 24}
    })";
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }
  std::string small() const { return " --config " + path("small.json").string(); }

  CliResult run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "cd " + dir_.string() + " && " + env + " " + CAMO_CLI_PATH +
                            " " + args + " > " + path("stdout.txt").string() + " 2> " +
                            path("stderr.txt").string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(path("stdout.txt"));
    r.err = slurp(path("stderr.txt"));
    return r;
  }

  // Synthesizes the small sequence into `name`.
  void synth(const std::string& name, const std::string& extra = "") const {
    const CliResult r = run("synth" + small() + " --seed 5 --output " + name + " " + extra);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

Json error_json(const CliResult& r) { return Json::parse(r.err); }

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++n;
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
  }
  std::size_t m = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++m;
  return n == m && n > 0;
}

TEST_F(Cli, NoArgumentsPrintsHelpAndFails) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, SynthIsByteIdenticalAcrossRuns) {
  synth("a");
  synth("b");
  EXPECT_TRUE(same_tree(path("a"), path("b")));
  EXPECT_TRUE(fs::exists(path("a/frame_0004.png")));
  EXPECT_TRUE(fs::exists(path("a/flow_0003.flo")));
  EXPECT_FALSE(fs::exists(path("a/flow_0004.flo")));
}

TEST_F(Cli, SynthStaticIntervalRecordedAndMasksConstant) {
  synth("s", "--length 6 --static 2:4");
  const Json meta = read_json_file(path("s/meta.json"));
  EXPECT_EQ(meta["config"]["static_interval"], Json::array({2, 4}));
  EXPECT_EQ(slurp(path("s/mask_0002.png")), slurp(path("s/mask_0003.png")));
  EXPECT_EQ(slurp(path("s/mask_0003.png")), slurp(path("s/mask_0004.png")));
}

TEST_F(Cli, SynthRejectsBadLength) {
  const CliResult r = run("synth --length 1 --output x");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_json(r)["error"]["code"], "config_invalid");
  EXPECT_FALSE(fs::exists(path("x")));
  EXPECT_EQ(run("synth --static 3-4 --output x").code, 2);
}

TEST_F(Cli, OutputRootFromEnvironment) {
  const CliResult r = run("synth" + small() + " --seed 9", "CAMO_OUTPUT_ROOT=" + path("root").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("root/synth_seed9/frame_0000.png")));
  ASSERT_EQ(run("synth" + small() + " --seed 9", "CAMO_OUTPUT_ROOT=").code, 0);
  EXPECT_TRUE(fs::exists(path("camo_output/synth_seed9/meta.json")));
}

TEST_F(Cli, RegisterRecoversGroundTruth) {
  synth("seq");
  for (const char* est : {"irls", "ransac"}) {
    const std::string out = std::string("reg_") + est;
    const CliResult r = run("register seq" + small() + " --estimator " + est + " --output " + out);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json s = read_json_file(path(out + "/summary.json"));
    EXPECT_EQ(s["pairs"], 4);
    EXPECT_LT(s["max_corner_error_px"].get<double>(), 0.5) << est;
    for (const char* f : {"registration_0003.json", "diff_0003.png", "inliers_0003.png"})
      EXPECT_TRUE(fs::exists(path(out) / f)) << f;
  }
}

TEST_F(Cli, RansacSeedIsReproducible) {
  synth("seq");
  const std::string base = "register seq" + small() + " --estimator ransac --seed 7";
  ASSERT_EQ(run(base + " --output r1").code, 0);
  ASSERT_EQ(run(base + " --output r2").code, 0);
  EXPECT_TRUE(same_tree(path("r1"), path("r2")));
}

TEST_F(Cli, MissingFlowNamesTheFrame) {
  synth("seq");
  fs::remove(path("seq/flow_0002.flo"));
  const CliResult r = run("register seq" + small() + " --output out");
  EXPECT_EQ(r.code, 2);
  const Json e = error_json(r);
  EXPECT_EQ(e["error"]["code"], "missing_input");
  EXPECT_EQ(e["error"]["frame"], 2);
}

TEST_F(Cli, RefusesToWriteIntoInput) {
  synth("seq");
  EXPECT_EQ(run("segment seq" + small() + " --output seq").code, 2);
}

TEST_F(Cli, SegmentWritesMasksReportAndMontage) {
  synth("seq");
  const CliResult r = run("segment seq" + small() + " --montage --jobs 2 --output seg");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("seg/mask_0003.png")));
  EXPECT_FALSE(fs::exists(path("seg/mask_0004.png")));
  const ImageBuffer montage = read_png(path("seg/montage_0000.png"));
  EXPECT_EQ(montage.width(), 96);
  EXPECT_EQ(montage.height(), 5 * 96);
  const Json report = read_json_file(path("seg/report.json"));
  EXPECT_EQ(report["frames"].size(), 4u);
  EXPECT_GE(report["aggregate"]["j"]["all_motion"].get<double>(), 0.7);
}

TEST_F(Cli, SegmentTwoFramesWithoutGroundTruth) {
  synth("seq", "--length 2");
  for (const char* f : {"mask_0000.png", "mask_0001.png"}) fs::remove(path("seq") / f);
  const CliResult r = run("segment seq" + small() + " --output seg");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("seg/mask_0000.png")));
  EXPECT_FALSE(fs::exists(path("seg/mask_0001.png")));
  EXPECT_FALSE(fs::exists(path("seg/report.json")));
}

TEST_F(Cli, EvalAgainstItselfIsPerfect) {
  synth("seq");
  const CliResult r = run("eval seq --gt seq --output ev");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json rep = read_json_file(path("ev/report.json"));
  EXPECT_EQ(rep["aggregate"]["j"]["all_motion"], 1.0);
  EXPECT_EQ(rep["aggregate"]["f"]["all_motion"], 1.0);
  EXPECT_EQ(rep["frames"].size(), 5u);
  // The aggregate also goes to stdout.
  EXPECT_EQ(Json::parse(r.out), rep["aggregate"]);
}

TEST_F(Cli, EvalSparseAndDenseAnnotationsAgree) {
  synth("seq");
  // The sprite moves linearly only approximately, so use boxes that are
  // exactly linear in the frame index.
  std::ofstream(path("sparse.csv")) << "frame,x_min,y_min,x_max,y_max,label\n"
                                       "0,10,10,30,30,locomotion\n"
                                       "4,18,14,38,34,locomotion\n";
  std::ofstream dense(path("dense.csv"));
  for (int f = 0; f <= 4; ++f)
    dense << f << "," << 10 + 2 * f << "," << 10 + f << "," << 30 + 2 * f << ","
          << 30 + f << ",locomotion\n";
  dense.close();
  ASSERT_EQ(run("eval seq --annotations sparse.csv --output e1").code, 0);
  ASSERT_EQ(run("eval seq --annotations dense.csv --output e2").code, 0);
  EXPECT_EQ(read_json_file(path("e1/report.json")), read_json_file(path("e2/report.json")));
}

TEST_F(Cli, EvalAllStaticIsEmpty) {
  synth("seq");
  std::ofstream(path("static.csv")) << "0,0,0,10,10,static\n3,0,0,10,10,static\n";
  const CliResult r = run("eval seq --annotations static.csv --output ev");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json rep = read_json_file(path("ev/report.json"));
  EXPECT_TRUE(rep["aggregate"]["empty"].get<bool>());
  EXPECT_TRUE(rep["aggregate"]["j"].is_null());
}

TEST_F(Cli, EvalMissingPredictionsListed) {
  synth("seq");
  fs::create_directories(path("pred"));
  fs::copy_file(path("seq/mask_0000.png"), path("pred/mask_0000.png"));
  const CliResult r = run("eval pred --gt seq --output ev");
  EXPECT_EQ(r.code, 2);
  const Json e = error_json(r);
  EXPECT_EQ(e["error"]["code"], "length_mismatch");
  EXPECT_NE(e["error"]["message"].get<std::string>().find("1, 2, 3, 4"), std::string::npos);
}

TEST_F(Cli, FlowVisZeroFieldIsWhite) {
  write_flo(FlowField(8, 6), path("zero.flo"));
  const CliResult r = run("flow-vis zero.flo");
  ASSERT_EQ(r.code, 0) << r.err;
  const ImageBuffer img = read_png(path("zero.png"));
  ASSERT_EQ(img.channels(), 3);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(img.at(x, y, c), 1.0f);
}

TEST_F(Cli, FlowVisCorruptInput) {
  std::ofstream(path("junk.flo")) << "not a flow file at all";
  const CliResult r = run("flow-vis junk.flo");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_json(r)["error"]["code"], "bad_magic");
  EXPECT_EQ(run("flow-vis absent.flo").code, 2);
}

TEST_F(Cli, PrintConfig) {
  const CliResult d = run("--print-config");
  ASSERT_EQ(d.code, 0);
  EXPECT_EQ(Json::parse(d.out), to_json(PipelineConfig{}));
  const CliResult e = run("register seq --print-config --seed 11 --estimator ransac" + small());
  ASSERT_EQ(e.code, 0) << e.err;
  const Json j = Json::parse(e.out);
  EXPECT_EQ(j["seed"], 11);
  EXPECT_EQ(j["estimator"], "ransac");
  EXPECT_EQ(j["synth"]["width"], 96);
}

TEST_F(Cli, UnknownConfigKey) {
  std::ofstream(path("bad.json")) << R"({"registration": {"gamm": 1}})";
  const CliResult r = run("synth --config bad.json --output x");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_json(r)["error"]["code"], "config_invalid");
}

}  // namespace
}  // namespace camo

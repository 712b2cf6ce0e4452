#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "camo/flow.hpp"
#include "camo/registration.hpp"
#include "camo/synthgen.hpp"
#include "test_support.hpp"

namespace camo {
namespace {

using testing::exact_grid;
using testing::random_homography;
using testing::scalar_apply;

const double kSigmaOne = 1.0 / (1.0 + std::exp(-1.0));

// Background points follow `h`; points with x < split move by an independent
// translation instead. Returns the outlier indicator alongside.
std::pair<CorrespondenceSet, std::vector<bool>> block_outliers(
    const Homography& h, double split, Point2 shift, int m = 32) {
  auto src = normalize_grid(256, 256, m, m);
  std::vector<Point2> dst;
  std::vector<bool> outlier;
  for (const auto& p : src) {
    const bool fg = p.x < split;
    outlier.push_back(fg);
    dst.push_back(fg ? Point2{p.x + shift.x, p.y + shift.y} : scalar_apply(h, p));
  }
  return {CorrespondenceSet(std::move(src), std::move(dst)), outlier};
}

// ---------------------------------------------------------------------------
// soft_inlier_labels

TEST(SoftInlierLabels, ReferenceValues) {
  const std::vector<double> r{0.01, 0.0, 0.05};
  const auto l = soft_inlier_labels(r, 0.01, 0.01);
  EXPECT_EQ(l[0], 0.5);
  EXPECT_NEAR(l[1], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(l[2], 0.01798620996209156, 1e-15);
}

TEST(SoftInlierLabels, StrictlyDecreasing) {
  std::vector<double> r;
  for (int i = 0; i <= 200; ++i) r.push_back(i * 0.0005);
  const auto l = soft_inlier_labels(r, 0.01, 0.01);
  for (std::size_t i = 1; i < l.size(); ++i) EXPECT_LT(l[i], l[i - 1]);
  for (double v : l) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(SoftInlierLabels, StableForExtremeArguments) {
  const std::vector<double> r{0.0, 1e3};
  const auto l = soft_inlier_labels(r, 0.01, 1e-4);
  EXPECT_TRUE(std::isfinite(l[0]));
  EXPECT_TRUE(std::isfinite(l[1]));
  EXPECT_GE(l[1], 0.0);
}

TEST(SoftInlierLabels, RejectsNegativeResidual) {
  const std::vector<double> r{-0.1};
  EXPECT_THROW(soft_inlier_labels(r, 0.01, 0.01), Error);
}

// ---------------------------------------------------------------------------
// registration_loss

TEST(RegistrationLoss, ClosedFormAtGenerator) {
  Rng rng(1);
  const Homography h = random_homography(rng);
  const CorrespondenceSet c = exact_grid(h, 16, 16);
  const double n = static_cast<double>(c.size());
  const RegistrationConfig cfg;
  const LossTerms t = registration_loss(c, WeightMap(c.size(), 1.0 - 1e-6), h, cfg);
  const double s = kSigmaOne;
  const double expected_reg =
      -cfg.gamma * n * s -
      (1.0 / n) * n * (s * std::log(1.0 - 1e-6) + (1.0 - s) * std::log(1e-6));
  EXPECT_NEAR(t.fit, 0.0, 1e-12);
  EXPECT_NEAR(t.reg, expected_reg, 1e-9 * std::abs(expected_reg));
  EXPECT_NEAR(t.total, t.fit + t.reg, 1e-15);
}

TEST(RegistrationLoss, HalfWeightsGiveLogTwo) {
  Rng rng(2);
  const Homography h = random_homography(rng);
  std::vector<Point2> src, dst;
  for (int i = 0; i < 50; ++i) {
    src.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    dst.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  const CorrespondenceSet c(src, dst);
  const RegistrationConfig cfg;
  const LossTerms t = registration_loss(c, WeightMap(50, 0.5), h, cfg);
  const auto labels = soft_inlier_labels(residuals(h, c), cfg.epsilon, cfg.tau);
  const double label_sum = std::accumulate(labels.begin(), labels.end(), 0.0);
  EXPECT_NEAR(t.reg + cfg.gamma * label_sum, std::log(2.0), 1e-12);
}

TEST(RegistrationLoss, FitInvariantToWeightScale) {
  Rng rng(3);
  const Homography h = random_homography(rng);
  auto [c, outlier] = block_outliers(h, -0.3, {0.2, 0.0}, 12);
  std::vector<double> w(c.size());
  for (auto& v : w) v = rng.uniform(0.05, 0.5);
  std::vector<double> w2 = w;
  for (auto& v : w2) v *= 2.0;
  const RegistrationConfig cfg;
  const LossTerms a = registration_loss(c, WeightMap(w), h, cfg);
  const LossTerms b = registration_loss(c, WeightMap(w2), h, cfg);
  EXPECT_NEAR(a.fit, b.fit, 1e-15);
  EXPECT_NE(a.reg, b.reg);
}

TEST(RegistrationLoss, LoweringOutlierWeightLowersLoss) {
  Rng rng(4);
  const RegistrationConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const Homography h = random_homography(rng);
    auto [c, outlier] = block_outliers(h, -0.5, {0.3, -0.2}, 10);
    std::vector<double> w(c.size());
    for (auto& v : w) v = rng.uniform(0.2, 0.9);
    const std::size_t victim = 0;  // x = -1 is in the outlier block
    ASSERT_TRUE(outlier[victim]);
    const double before = registration_loss(c, WeightMap(w), h, cfg).total;
    w[victim] *= 0.5;
    const double after = registration_loss(c, WeightMap(w), h, cfg).total;
    EXPECT_LT(after, before);
  }
}

TEST(RegistrationLoss, ZeroTotalWeight) {
  const CorrespondenceSet c = exact_grid(Homography::identity(), 4, 4);
  try {
    registration_loss(c, WeightMap(c.size(), 0.0), Homography::identity(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroTotalWeight);
  }
}

TEST(RegistrationLoss, LengthMismatch) {
  const CorrespondenceSet c = exact_grid(Homography::identity(), 4, 4);
  EXPECT_THROW(registration_loss(c, WeightMap(3, 0.5), Homography::identity(), {}),
               Error);
}

TEST(WeightMapAndConfig, Validation) {
  EXPECT_THROW(WeightMap(std::vector<double>{0.5, 1.5}), Error);
  EXPECT_THROW(WeightMap(std::vector<double>{-0.1}), Error);
  RegistrationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.grid_m = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.step_size = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}

// ---------------------------------------------------------------------------
// estimate_ransac

TEST(Ransac, OutlierFreeRecovery) {
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const Homography h = random_homography(rng);
    const RegistrationResult r = estimate_ransac(exact_grid(h, 32, 32), {});
    EXPECT_LT(corner_transfer_error(r.homography, h), 1e-6);
    for (double w : r.weights.values()) EXPECT_EQ(w, 1.0);
  }
}

TEST(Ransac, MinimalExactFit) {
  Rng rng(6);
  const Homography h = random_homography(rng);
  std::vector<Point2> src(normalized_corners().begin(), normalized_corners().end());
  std::vector<Point2> dst;
  for (const auto& p : src) dst.push_back(scalar_apply(h, p));
  const CorrespondenceSet c(src, dst);
  const RegistrationResult r = estimate_ransac(c, {});
  for (double w : r.weights.values()) EXPECT_EQ(w, 1.0);
  for (double res : residuals(r.homography, c)) EXPECT_LT(res, 1e-9);
}

TEST(Ransac, StructuredOutliersGetZeroWeight) {
  Rng rng(7);
  const Homography h = random_homography(rng, 0.05, 0.05, 0.02);
  // About 30% of the grid moves independently.
  auto [c, outlier] = block_outliers(h, -0.4, {0.15, 0.08});
  const RegistrationResult r = estimate_ransac(c, {});
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (outlier[i]) EXPECT_EQ(r.weights[i], 0.0) << i;
    else EXPECT_EQ(r.weights[i], 1.0) << i;
  }
  EXPECT_LT(corner_transfer_error_px(r.homography, h, 256, 256), 1.0);
}

TEST(Ransac, DeterministicForSeed) {
  Rng rng(8);
  const Homography h = random_homography(rng);
  auto [c, outlier] = block_outliers(h, -0.2, {0.1, 0.1});
  RegistrationConfig cfg;
  cfg.seed = 7;
  const RegistrationResult a = estimate_ransac(c, cfg);
  const RegistrationResult b = estimate_ransac(c, cfg);
  EXPECT_EQ(a.homography, b.homography);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.loss, b.loss);
}

TEST(Ransac, AllSamplesDegenerate) {
  std::vector<Point2> src, dst;
  for (int i = 0; i < 20; ++i) {
    src.push_back({-1.0 + 0.1 * i, 0.0});
    dst.push_back({-1.0 + 0.1 * i, 0.1});
  }
  RegistrationConfig cfg;
  cfg.ransac_iterations = 50;
  try {
    estimate_ransac(CorrespondenceSet(src, dst), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoModelFound);
  }
}

// ---------------------------------------------------------------------------
// estimate_irls

TEST(Irls, OutlierFreeConvergesToLabelFixedPoint) {
  Rng rng(9);
  const Homography h = random_homography(rng);
  const RegistrationResult r = estimate_irls(exact_grid(h), {});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(corner_transfer_error(r.homography, h), 1e-5);
  // With exact data every residual is 0, so the weights settle at the soft
  // label sigma(epsilon / tau) = sigma(1).
  for (double w : r.weights.values()) {
    EXPECT_NEAR(w, kSigmaOne, 1e-5);
    EXPECT_GT(w, 0.7);
  }
}

TEST(Irls, StructuredOutliersSeparate) {
  // Synthetic pairs whose sprite covers 30-40% of the grid and moves fast
  // enough (>= 5 px) that its residuals sit well beyond epsilon.
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 5 && seed < 200; ++seed) {
    SynthConfig sc;
    sc.length = 2;
    sc.seed = 300 + seed;
    sc.sprite.min_radius = 0.33;
    sc.sprite.max_radius = 0.44;
    sc.sprite.min_speed = 5.0;
    sc.sprite.max_speed = 8.0;
    const SyntheticSequence seq = generate_sequence(sc);
    const auto& truth = seq.gt_inlier_maps[0];
    const double outliers =
        static_cast<double>(std::count(truth.begin(), truth.end(), false)) / truth.size();
    if (outliers < 0.3 || outliers > 0.4) continue;
    ++checked;

    const CorrespondenceSet c = flow_to_correspondences(seq.gt_flows[0], 64, 64);
    const RegistrationResult r = estimate_irls(c, {});
    // Where the sprite's own motion happens to mimic the camera's, its points
    // are consistent with the background model; only clearly separated ones
    // are expected to drop out.
    const auto gt_residual = residuals(seq.gt_homographies[0], c);
    EXPECT_LT(corner_transfer_error_px(r.homography, seq.gt_homographies[0], 256, 256), 1.0);
    // Grid points whose bilinear footprint straddles the sprite edge carry a
    // blend of both motions; they belong to neither class.
    const auto grid = normalize_grid(256, 256, 64, 64);
    const SegMask& mask = seq.gt_masks[0];
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Point2 px = normalized_to_pixel(grid[i], 256, 256);
      const int x0 = static_cast<int>(std::floor(px.x)), y0 = static_cast<int>(std::floor(px.y));
      const int x1 = std::min(x0 + 1, 255), y1 = std::min(y0 + 1, 255);
      const int on = mask.at(x0, y0) + mask.at(x1, y0) + mask.at(x0, y1) + mask.at(x1, y1);
      if (on == 0) {
        // The ceiling is sigma(1) = 0.731; sub-pixel model error near the
        // sprite pulls a few labels slightly below it.
        EXPECT_GT(r.weights[i], 0.6) << "background point " << i;
      } else if (on == 4 && gt_residual[i] > 0.04) {
        EXPECT_LT(r.weights[i], 0.1) << "sprite point " << i;
      }
    }
  }
  EXPECT_EQ(checked, 5);
}

TEST(Irls, ZeroFlowGivesIdentity) {
  const auto c = flow_to_correspondences(FlowField(64, 64), 16, 16);
  const RegistrationConfig cfg;
  const RegistrationResult r = estimate_irls(c, cfg);
  EXPECT_LT(testing::max_coefficient_gap(r.homography, Homography::identity()), 1e-12);
  EXPECT_NEAR(registration_loss(c, r.weights, r.homography, cfg).fit, 0.0, 1e-12);
}

TEST(Irls, BestLossIsTraceMinimumAndBeatsStart) {
  Rng rng(11);
  const Homography h = random_homography(rng);
  auto [c, outlier] = block_outliers(h, -0.3, {0.2, 0.05});
  const RegistrationResult r = estimate_irls(c, {});
  ASSERT_FALSE(r.loss_trace.empty());
  EXPECT_EQ(r.loss, *std::min_element(r.loss_trace.begin(), r.loss_trace.end()));
  EXPECT_LE(r.loss, r.loss_trace.front());
  EXPECT_EQ(static_cast<std::size_t>(r.iterations), r.loss_trace.size());
  for (double w : r.weights.values()) {
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
  }
}

TEST(Irls, NonConvergenceIsFlaggedNotThrown) {
  Rng rng(12);
  const Homography h = random_homography(rng);
  auto [c, outlier] = block_outliers(h, -0.3, {0.2, 0.05});
  RegistrationConfig cfg;
  cfg.max_iterations = 2;
  const RegistrationResult r = estimate_irls(c, cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
}

TEST(Estimators, AgreeOnNoiselessData) {
  Rng rng(13);
  for (int i = 0; i < 10; ++i) {
    const Homography h = random_homography(rng);
    const CorrespondenceSet c = exact_grid(h, 32, 32);
    const RegistrationConfig cfg;
    EXPECT_LT(corner_transfer_error(estimate_ransac(c, cfg).homography,
                                    estimate_irls(c, cfg).homography),
              1e-4);
  }
}

TEST(Estimators, SyntheticPairsWithinOnePixel) {
  SynthConfig sc;
  sc.length = 4;
  sc.seed = 21;
  const SyntheticSequence seq = generate_sequence(sc);
  for (std::size_t t = 0; t < seq.gt_flows.size(); ++t) {
    const auto c = flow_to_correspondences(seq.gt_flows[t], 64, 64);
    for (const auto& r : {estimate_ransac(c, {}), estimate_irls(c, {})})
      EXPECT_LT(corner_transfer_error_px(r.homography, seq.gt_homographies[t], 256, 256),
                1.0);
  }
}

// ---------------------------------------------------------------------------
// align_and_diff

TEST(AlignAndDiff, IdenticalFramesGiveZero) {
  ImageBuffer img(32, 24, 3);
  Rng rng(1);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  const DiffResult d = align_and_diff(img, img, Homography::identity());
  EXPECT_EQ(d.diff.channels(), 1);
  for (float v : d.diff.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(d.valid.count(), 32u * 24u);
}

TEST(AlignAndDiff, InvalidPixelsAreZero) {
  ImageBuffer a(32, 32, 1, 0.2f), b(32, 32, 1, 0.9f);
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = 0.5;
  const DiffResult d = align_and_diff(a, b, Homography::from_matrix(m));
  std::size_t invalid = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (d.valid.at(x, y)) {
        EXPECT_NEAR(d.diff.at(x, y), 0.7f, 1e-6f);
      } else {
        ++invalid;
        EXPECT_EQ(d.diff.at(x, y), 0.0f);
      }
    }
  EXPECT_GT(invalid, 0u);
}

TEST(AlignAndDiff, GroundTruthAlignmentSuppressesBackground) {
  SynthConfig sc;
  sc.length = 3;
  sc.seed = 5;
  sc.jitter = 0.08;
  const SyntheticSequence seq = generate_sequence(sc);
  const DiffResult d =
      align_and_diff(seq.frames[0], seq.frames[1], seq.gt_homographies[0]);
  double aligned = 0.0, unaligned = 0.0, inside = 0.0;
  std::size_t n_bg = 0, n_in = 0;
  const SegMask& m0 = seq.gt_masks[0];
  const SegMask& m1 = seq.gt_masks[1];
  int x0 = 256, y0 = 256, x1 = -1, y1 = -1;
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x)
      if (m0.at(x, y)) {
        x0 = std::min(x0, x); y0 = std::min(y0, y);
        x1 = std::max(x1, x); y1 = std::max(y1, y);
      }
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) {
      if (!d.valid.at(x, y)) continue;
      if (x >= x0 && x <= x1 && y >= y0 && y <= y1) {
        inside += d.diff.at(x, y);
        ++n_in;
      }
      // Background only: not on the sprite at t or t+1, and not resampled
      // from the sprite at t+1.
      const int dx = static_cast<int>(std::lround(x + seq.gt_flows[0].dx(x, y)));
      const int dy = static_cast<int>(std::lround(y + seq.gt_flows[0].dy(x, y)));
      if (m0.at(x, y) || m1.at(x, y) || m1.at_or(dx, dy, false)) continue;
      double u = 0.0;
      for (int c = 0; c < 3; ++c)
        u += std::abs(seq.frames[1].at(x, y, c) - seq.frames[0].at(x, y, c));
      unaligned += u / 3.0;
      aligned += d.diff.at(x, y);
      ++n_bg;
    }
  aligned /= n_bg;
  unaligned /= n_bg;
  inside /= n_in;
  EXPECT_LE(aligned * 5.0, unaligned);
  EXPECT_GT(inside, aligned);
}

}  // namespace
}  // namespace camo

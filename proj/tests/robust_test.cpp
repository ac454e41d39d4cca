#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "epimatch/robust.hpp"
#include "test_util.hpp"

namespace epimatch {
namespace {

using testing::CameraPair;
using testing::exact_matches;
using testing::max_abs_diff;
using testing::random_camera_pair;
using testing::visible_points;

// Uniform-random matches rejected while they happen to satisfy the true
// epipolar geometry, so "outlier" really means inconsistent with F_gt.
std::vector<Correspondence> outliers(std::mt19937_64& rng, const CameraPair& pair, int count,
                                     double threshold) {
  const auto E = essential_from_pose(pair.rel);
  std::uniform_real_distribution<double> u(0, 640), v(0, 480);
  std::vector<Correspondence> out;
  while (static_cast<int>(out.size()) < count) {
    Correspondence c{{u(rng), v(rng)}, {u(rng), v(rng)}, 0.5};
    const double d = symmetric_epipolar_distance_sq(
        FundamentalMatrix(E.m), normalize_point(pair.cam1.intrinsics, c.x1),
        normalize_point(pair.cam2.intrinsics, c.x2));
    if (d > 100.0 * threshold) out.push_back(c);
  }
  return out;
}

// Pinhole 640x480, f = 500 views of points that land inside both images.
struct ImagedScene {
  CameraPair pair;
  std::vector<Point3> points;
};

ImagedScene imaged_scene(std::mt19937_64& rng, int count) {
  ImagedScene s;
  s.pair = random_camera_pair(rng, true);
  s.pair.cam1.intrinsics = s.pair.cam2.intrinsics = {500, 500, 320, 240};
  std::uniform_real_distribution<double> xy(-3, 3), z(4, 10);
  while (static_cast<int>(s.points.size()) < count) {
    const Point3 X(xy(rng), xy(rng), z(rng));
    if ((s.pair.cam2.pose.R * X + s.pair.cam2.pose.t).z() < 0.5) continue;
    const auto a = project(s.pair.cam1, X).pixel;
    const auto b = project(s.pair.cam2, X).pixel;
    if (a.u < 0 || a.u >= 640 || a.v < 0 || a.v >= 480) continue;
    if (b.u < 0 || b.u >= 640 || b.v < 0 || b.v >= 480) continue;
    s.points.push_back(X);
  }
  return s;
}

double translation_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b)));
}

TEST(EightPoint, RecoversGroundTruthFromExactMatches) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const CameraPair pair = random_camera_pair(rng);
    const auto matches = exact_matches(pair, visible_points(rng, pair, 20));
    const auto F = eight_point(matches);
    const auto Fgt = fundamental_from_pose(pair.cam1.intrinsics, pair.cam2.intrinsics, pair.rel);
    EXPECT_LT(max_abs_diff(F.m, Fgt.m), 1e-8);
    EXPECT_LT(std::abs(F.m.determinant()), 1e-12);
  }
}

TEST(EightPoint, PlanarSceneSidewaysMotionStillSatisfiesResiduals) {
  CameraPair pair;
  pair.cam1.intrinsics = pair.cam2.intrinsics = {500, 500, 320, 240};
  pair.cam2.pose.t = {-0.5, 0, 0};
  pair.rel = RelativePose::between(pair.cam1.pose, pair.cam2.pose);
  // Eight points in general position on the plane z = 5 + 0.2 x.
  const double xs[8] = {-1.0, 0.3, 1.1, -0.7, 0.9, -0.2, 0.5, -1.3};
  const double ys[8] = {-0.8, -1.1, 0.4, 0.9, -0.3, 0.2, 1.2, 0.1};
  std::vector<Point3> pts;
  for (int k = 0; k < 8; ++k) pts.emplace_back(xs[k], ys[k], 5.0 + 0.2 * xs[k]);
  const auto matches = exact_matches(pair, pts);
  const auto F = eight_point(matches);
  for (const auto& m : matches) EXPECT_LT(std::abs(epipolar_residual(F, m.x1, m.x2)), 1e-8);
}

TEST(EightPoint, TooFewAndCollinearInputsFail) {
  std::mt19937_64 rng(7);
  const CameraPair pair = random_camera_pair(rng);
  auto matches = exact_matches(pair, visible_points(rng, pair, 7));
  try {
    eight_point(matches);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotEnoughMatches);
  }
  std::vector<Correspondence> line;
  for (int k = 0; k < 10; ++k) line.push_back({{10.0 * k, 5.0 * k}, {3.0 * k, 7.0 + k * k}, 1});
  try {
    eight_point(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateConfiguration);
  }
}

TEST(Ransac, SeparatesInliersFromOutliers) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const ImagedScene scene = imaged_scene(rng, 100);
    auto matches = exact_matches(scene.pair, scene.points);
    const auto out = outliers(rng, scene.pair, 50, 1e-6);
    matches.insert(matches.end(), out.begin(), out.end());
    RansacConfig cfg;
    cfg.iterations = 500;
    cfg.inlier_threshold = 1e-6;
    cfg.seed = seed;
    const auto K = scene.pair.cam1.intrinsics;
    const RansacResult r = ransac_fundamental(matches, K, K, cfg);
    ASSERT_EQ(r.inlier_count, 100u);
    for (std::size_t k = 0; k < matches.size(); ++k) EXPECT_EQ(r.inlier_mask[k], k < 100);
    const auto Fgt = fundamental_from_pose(K, K, scene.pair.rel);
    EXPECT_LT(max_abs_diff(r.F.m, Fgt.m), 1e-6);
    EXPECT_FALSE(r.no_consensus);
    EXPECT_EQ(r.num_input_matches, 150u);
  }
}

TEST(Ransac, AllOutliersReportNoConsensus) {
  int flagged = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(77 + seed);
    std::uniform_real_distribution<double> u(0, 640), v(0, 480);
    std::vector<Correspondence> matches;
    for (int k = 0; k < 40; ++k) matches.push_back({{u(rng), v(rng)}, {u(rng), v(rng)}, 0.1});
    RansacConfig cfg;
    cfg.iterations = 200;
    cfg.inlier_threshold = 1e-6;
    cfg.seed = seed;
    const CameraIntrinsics K{500, 500, 320, 240};
    const RansacResult r = ransac_fundamental(matches, K, K, cfg);
    EXPECT_EQ(r.no_consensus, r.inlier_count <= 8u);
    if (r.no_consensus) ++flagged;
  }
  EXPECT_GE(flagged, 8);
}

TEST(Ransac, IsDeterministic) {
  std::mt19937_64 rng(5);
  const ImagedScene scene = imaged_scene(rng, 60);
  auto matches = exact_matches(scene.pair, scene.points);
  const auto out = outliers(rng, scene.pair, 40, 1e-5);
  matches.insert(matches.end(), out.begin(), out.end());
  RansacConfig cfg;
  cfg.seed = 42;
  const auto K = scene.pair.cam1.intrinsics;
  const RansacResult a = ransac_fundamental(matches, K, K, cfg);
  const RansacResult b = ransac_fundamental(matches, K, K, cfg);
  EXPECT_TRUE(a == b);
}

TEST(Ransac, AddingExactInliersNeverLowersInlierCount) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(300 + seed);
    const ImagedScene scene = imaged_scene(rng, 120);
    const auto exact = exact_matches(scene.pair, scene.points);
    const auto out = outliers(rng, scene.pair, 30, 1e-5);
    RansacConfig cfg;
    cfg.seed = seed;
    const auto K = scene.pair.cam1.intrinsics;
    std::size_t previous = 0;
    for (int n : {40, 80, 120}) {
      std::vector<Correspondence> m(exact.begin(), exact.begin() + n);
      m.insert(m.end(), out.begin(), out.end());
      const auto r = ransac_fundamental(m, K, K, cfg);
      EXPECT_GE(r.inlier_count, previous);
      previous = r.inlier_count;
    }
  }
}

TEST(Ransac, RefitKeepsHypothesisInliers) {
  int superset = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    const ImagedScene scene = imaged_scene(rng, 80);
    auto matches = exact_matches(scene.pair, scene.points);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (auto& m : matches) {
      m.x2.u += noise(rng);
      m.x2.v += noise(rng);
    }
    const auto out = outliers(rng, scene.pair, 30, 1e-5);
    matches.insert(matches.end(), out.begin(), out.end());
    RansacConfig cfg;
    cfg.seed = seed;
    cfg.iterations = 200;
    const auto K = scene.pair.cam1.intrinsics;
    const auto r = ransac_fundamental(matches, K, K, cfg);
    bool ok = true;
    for (std::size_t k = 0; k < matches.size(); ++k) {
      if (r.hypothesis_inlier_mask[k] && !r.inlier_mask[k]) ok = false;
    }
    if (ok) ++superset;
  }
  EXPECT_GE(superset, 95);
}

TEST(Ransac, RejectsTooFewMatches) {
  std::vector<Correspondence> m(7, Correspondence{{1, 2}, {3, 4}, 1});
  try {
    ransac_fundamental(m, {500, 500, 320, 240}, {500, 500, 320, 240}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotEnoughMatches);
  }
}

TEST(RelativePose, ExactMatchesRecoverPose) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(900 + seed);
    const ImagedScene scene = imaged_scene(rng, 200);
    const auto matches = exact_matches(scene.pair, scene.points);
    RansacConfig cfg;
    cfg.seed = seed;
    const auto K = scene.pair.cam1.intrinsics;
    const PoseEstimate est = estimate_relative_pose(matches, K, K, cfg);
    EXPECT_LT(rotation_angle(est.pose.R.transpose() * scene.pair.rel.R), 1e-6);
    EXPECT_LT(translation_angle(est.pose.t, scene.pair.rel.t), 1e-6);
    EXPECT_NEAR(est.pose.t.norm(), 1.0, 1e-12);
  }
}

TEST(RelativePose, HalfPixelNoiseStaysWithinBounds) {
  std::vector<double> rot, trans;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(2000 + seed);
    const ImagedScene scene = imaged_scene(rng, 200);
    auto matches = exact_matches(scene.pair, scene.points);
    std::normal_distribution<double> noise(0.0, 0.5);
    for (auto& m : matches) {
      m.x1.u += noise(rng);
      m.x1.v += noise(rng);
      m.x2.u += noise(rng);
      m.x2.v += noise(rng);
    }
    RansacConfig cfg;
    cfg.seed = seed;
    const auto K = scene.pair.cam1.intrinsics;
    const PoseEstimate est = estimate_relative_pose(matches, K, K, cfg);
    rot.push_back(rotation_angle(est.pose.R.transpose() * scene.pair.rel.R) * 180.0 / M_PI);
    trans.push_back(translation_angle(est.pose.t, scene.pair.rel.t) * 180.0 / M_PI);
  }
  std::nth_element(rot.begin(), rot.begin() + 10, rot.end());
  std::nth_element(trans.begin(), trans.begin() + 10, trans.end());
  EXPECT_LT(rot[10], 0.5);
  EXPECT_LT(trans[10], 2.0);
}

TEST(RelativePose, TooFewMatches) {
  std::vector<Correspondence> m(5, Correspondence{{1, 2}, {3, 4}, 1});
  EXPECT_THROW(estimate_relative_pose(m, {500, 500, 320, 240}, {500, 500, 320, 240}, {}), Error);
}

}  // namespace
}  // namespace epimatch

#include <gtest/gtest.h>

#include <cmath>

#include "epimatch/synth.hpp"

namespace epimatch {
namespace {

const GridSpec kGrid{16, 16, 8};

// One textured wall at depth z filling the view of a camera at the origin.
SceneSpec single_wall(double z, double noise = 0.0) {
  SceneSpec s = make_domain("A", 3);
  s.use_room = false;
  s.noise_sigma = noise;
  TexturedPlane wall;
  wall.origin = {-20.0, -20.0, z};
  wall.axis_u = Eigen::Vector3d::UnitX();
  wall.axis_v = Eigen::Vector3d::UnitY();
  wall.len_u = 40.0;
  wall.len_v = 40.0;
  wall.texture_seed = 11;
  s.extra_planes.push_back(wall);
  return s;
}

Camera camera_at(const SceneSpec& s, const Eigen::Vector3d& centre) {
  return {s.intrinsics(), {Eigen::Matrix3d::Identity(), -centre}};
}

TEST(Synth, IdentityPoseRendersIdenticalViews) {
  SceneSpec spec = make_domain("A", 5);
  spec.noise_sigma = 0.0;
  const RenderedPair sampled = sample_pair(spec, 0);
  const RenderedPair p = render_pair(spec, 0, sampled.cam1, sampled.cam1);
  EXPECT_EQ(p.image1, p.image2);
  EXPECT_FALSE(p.F_gt.has_value());
  const auto gt = gt_correspondence_grid(p, kGrid);
  int valid = 0;
  for (int i = 0; i < kGrid.size(); ++i) {
    if (!gt[static_cast<std::size_t>(i)]) continue;
    ++valid;
    const auto& t = *gt[static_cast<std::size_t>(i)];
    EXPECT_EQ(t.cell, i);
    EXPECT_NEAR(t.point.u, kGrid.centre(i).u, 1e-9);
    EXPECT_NEAR(t.point.v, kGrid.centre(i).v, 1e-9);
  }
  EXPECT_GT(valid, kGrid.size() / 2);
}

TEST(Synth, SameSeedAndIndexIsBitIdentical) {
  const SceneSpec spec = make_domain("B", 9);
  const RenderedPair a = sample_pair(spec, 4);
  const RenderedPair b = sample_pair(spec, 4);
  EXPECT_EQ(a.image1, b.image1);
  EXPECT_EQ(a.image2, b.image2);
  EXPECT_EQ(a.depth1, b.depth1);
  EXPECT_EQ(a.pose.R, b.pose.R);
  EXPECT_EQ(a.pose.t, b.pose.t);
  const RenderedPair c = sample_pair(spec, 5);
  EXPECT_NE(a.image1, c.image1);
}

TEST(Synth, ImagesStayInUnitRange) {
  for (const char* d : {"A", "B"}) {
    const RenderedPair p = sample_pair(make_domain(d, 2), 1);
    for (const Image* im : {&p.image1, &p.image2}) {
      EXPECT_GE(im->minCoeff(), 0.0);
      EXPECT_LE(im->maxCoeff(), 1.0);
    }
    EXPECT_GT(p.depth1.maxCoeff(), 0.0);
  }
}

// Every pixel centre with depth, backprojected and moved to view 2, lies on
// its epipolar line.
TEST(Synth, PerPixelEpipolarAudit) {
  for (const char* d : {"A", "B"}) {
    const SceneSpec spec = make_domain(d, 21);
    for (int idx = 0; idx < 5; ++idx) {
      const RenderedPair p = sample_pair(spec, idx);
      ASSERT_TRUE(p.F_gt.has_value());
      double worst = 0.0;
      for (int r = 0; r < p.depth1.rows(); ++r) {
        for (int c = 0; c < p.depth1.cols(); ++c) {
          const double z = p.depth1(r, c);
          if (z <= 0.0) continue;
          const HomPoint2 x1(c + 0.5, r + 0.5);
          const Eigen::Vector3d X = p.pose.R * (z * normalize_point(p.K, x1).vec()) + p.pose.t;
          if (X.z() <= 0.0) continue;
          const HomPoint2 x2(p.K.fx * X.x() / X.z() + p.K.cx, p.K.fy * X.y() / X.z() + p.K.cy);
          worst = std::max(worst, point_line_distance(epipolar_line(*p.F_gt, x1), x2));
        }
      }
      EXPECT_LT(worst, 1e-6) << d << " pair " << idx;
    }
  }
}

TEST(Synth, GtTargetsLieOnEpipolarLines) {
  const RenderedPair p = sample_pair(make_domain("A", 8), 2);
  const auto gt = gt_correspondence_grid(p, kGrid);
  int valid = 0;
  for (int i = 0; i < kGrid.size(); ++i) {
    const auto& t = gt[static_cast<std::size_t>(i)];
    if (!t) continue;
    ++valid;
    EXPECT_LT(point_line_distance(epipolar_line(*p.F_gt, kGrid.centre(i)), t->point), 1e-6);
    EXPECT_EQ(kGrid.cell_of(t->point.u, t->point.v), t->cell);
  }
  EXPECT_GT(valid, kGrid.size() / 3);
}

TEST(Synth, FrontoParallelDepthIsExact) {
  const SceneSpec s = single_wall(4.0);
  const Camera cam = camera_at(s, Eigen::Vector3d::Zero());
  const RenderedPair p = render_pair(s, 0, cam, cam);
  EXPECT_LT((p.depth1.array() - 4.0).abs().maxCoeff(), 1e-12);
}

TEST(Synth, HorizontalBaselineGivesStereoDisparity) {
  const double Z = 5.0, B = 0.4;
  const SceneSpec s = single_wall(Z);
  const RenderedPair p = render_pair(s, 0, camera_at(s, Eigen::Vector3d::Zero()), camera_at(s, {B, 0.0, 0.0}));
  const double disparity = s.focal * B / Z;
  const auto gt = gt_correspondence_grid(p, kGrid);
  int valid = 0;
  for (int i = 0; i < kGrid.size(); ++i) {
    const auto& t = gt[static_cast<std::size_t>(i)];
    if (!t) continue;
    ++valid;
    EXPECT_NEAR(kGrid.centre(i).u - t->point.u, disparity, 1e-6);
    EXPECT_NEAR(kGrid.centre(i).v, t->point.v, 1e-6);
  }
  // Only the cells that move out of view are lost.
  EXPECT_EQ(valid, kGrid.rows * (kGrid.cols - static_cast<int>(std::ceil((disparity - 4.0) / 8.0))));
}

TEST(Synth, PointsBehindCameraTwoHaveNoTarget) {
  const SceneSpec s = single_wall(4.0);
  const RenderedPair p = render_pair(s, 0, camera_at(s, Eigen::Vector3d::Zero()), camera_at(s, {0.0, 0.0, 5.0}));
  for (const auto& t : gt_correspondence_grid(p, kGrid)) EXPECT_FALSE(t.has_value());
}

TEST(Synth, OccludedPointsHaveNoTarget) {
  // A narrow post in front of the wall hides part of it from a shifted camera.
  SceneSpec s = single_wall(6.0);
  TexturedPlane post;
  post.origin = {0.3, -5.0, 2.0};
  post.axis_u = Eigen::Vector3d::UnitX();
  post.axis_v = Eigen::Vector3d::UnitY();
  post.len_u = 0.4;
  post.len_v = 10.0;
  s.extra_planes.push_back(post);
  const RenderedPair p = render_pair(s, 0, camera_at(s, Eigen::Vector3d::Zero()), camera_at(s, {0.5, 0.0, 0.0}));
  const auto gt = gt_correspondence_grid(p, kGrid);
  int occluded = 0;
  for (int i = 0; i < kGrid.size(); ++i) {
    const HomPoint2 x = kGrid.centre(i);
    const double z = p.depth1(static_cast<int>(x.v), static_cast<int>(x.u));
    if (std::abs(z - 6.0) > 1e-9) continue;  // on the post
    const Eigen::Vector3d X = z * normalize_point(p.K, x).vec();
    // Wall point hidden from camera 2 when its ray to C2 crosses the post.
    const Eigen::Vector3d C2(0.5, 0.0, 0.0);
    const double a = (2.0 - X.z()) / (C2.z() - X.z());
    const double xc = X.x() + a * (C2.x() - X.x());
    // Skip rays within a pixel of the post's edges; depth2 is sampled per pixel.
    const double margin = 2.0 * 2.0 / p.K.fx;
    if (xc > 0.3 + margin && xc < 0.7 - margin) {
      ++occluded;
      EXPECT_FALSE(gt[static_cast<std::size_t>(i)].has_value()) << "cell " << i;
    }
  }
  EXPECT_GT(occluded, 0);
}

TEST(Synth, DomainsValidateAndDiffer) {
  const SceneSpec a = make_domain("A"), b = make_domain("B");
  EXPECT_NO_THROW(a.validate());
  EXPECT_NO_THROW(b.validate());
  EXPECT_NE(a.texture.base_frequency, b.texture.base_frequency);
  EXPECT_GT(a.texture.contrast, b.texture.contrast);
  EXPECT_GT(b.pose_sampler.rotation_max_deg, a.pose_sampler.rotation_max_deg);
  EXPECT_GT(b.pose_sampler.baseline_max, a.pose_sampler.baseline_max);
  EXPECT_GT(b.noise_sigma, a.noise_sigma);
  EXPECT_THROW(make_domain("C"), Error);
}

TEST(Synth, DomainsDifferInGradientEnergy) {
  double grad[2] = {0.0, 0.0};
  const char* names[2] = {"A", "B"};
  for (int d = 0; d < 2; ++d) {
    const SceneSpec spec = make_domain(names[d], 100);
    for (int i = 0; i < 100; ++i) {
      const RenderedPair p = sample_pair(spec, i);
      grad[d] += mean_gradient_magnitude(p.image1) + mean_gradient_magnitude(p.image2);
    }
  }
  EXPECT_GE(grad[0], 2.0 * grad[1]);
}

TEST(Synth, RotationRangeIsRespected) {
  const SceneSpec spec = make_domain("B", 4);
  for (int i = 0; i < 10; ++i) {
    const double deg = rotation_angle(sample_pair(spec, i).pose.R) * 180.0 / M_PI;
    EXPECT_GE(deg, spec.pose_sampler.rotation_min_deg);
    EXPECT_LE(deg, spec.pose_sampler.rotation_max_deg);
  }
}

TEST(Synth, ImpossiblePoseRangeRaises) {
  SceneSpec spec = make_domain("A", 1);
  spec.pose_sampler.rotation_min_deg = 170.0;
  spec.pose_sampler.rotation_max_deg = 180.0;
  spec.max_retries = 5;
  try {
    sample_pair(spec, 0);
    FAIL() << "expected DegeneratePose";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegeneratePose);
  }
}

}  // namespace
}  // namespace epimatch

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "epimatch/pairgen.hpp"

namespace epimatch {
namespace {

const CameraIntrinsics kK{100.0, 100.0, 64.0, 48.0};

// Camera at C looking along yaw (about world z) pitched down by `pitch`.
Camera heading_camera(const Eigen::Vector3d& C, double yaw, double pitch = 0.0,
                      const CameraIntrinsics& K = kK) {
  const Eigen::Vector3d fwd(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), -std::sin(pitch));
  const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = fwd.cross(right);
  Eigen::Matrix3d R;
  R.row(0) = right;
  R.row(1) = down;
  R.row(2) = fwd;
  return {K, {R, -R * C}};
}

HomPoint2 principal(const Camera& c) { return {c.intrinsics.cx, c.intrinsics.cy}; }

TEST(PseudoDepth, HemisphereLookingDownHitsThePlane) {
  Camera cam = heading_camera({0.0, 0.0, 0.0}, 0.0, M_PI / 2.0);
  const auto d = pseudo_depth(model_preset("euroc-machine"), cam, principal(cam));
  ASSERT_TRUE(d);
  EXPECT_NEAR(*d, 2.0, 1e-12);
}

TEST(PseudoDepth, HemisphereHorizontalRayFromDomeCentreHitsRadius) {
  const Camera cam = heading_camera({1.0, -2.0, 0.0}, 0.7);
  const auto d = pseudo_depth(HemisphereModel{0.0, 3.0}, cam, principal(cam));
  ASSERT_TRUE(d);
  EXPECT_NEAR(*d, 3.0, 1e-12);
}

TEST(PseudoDepth, HemisphereDomeHitForUpwardRay) {
  // Camera 1 m above the plane pitched up 30 degrees: |C + s*dir - centre| = r.
  const Camera cam = heading_camera({0.0, 0.0, 1.0}, 0.0, -M_PI / 6.0);
  const auto d = pseudo_depth(HemisphereModel{0.0, 3.0}, cam, principal(cam));
  ASSERT_TRUE(d);
  // Offset from the centre is (s cos30, 0, 1 + s sin30); solve s^2 + s + 1 = 9.
  const double s = (-1.0 + std::sqrt(1.0 + 32.0)) / 2.0;
  EXPECT_NEAR(*d, s, 1e-12);
}

TEST(PseudoDepth, BoxFrontAndBackAreNone) {
  const PseudoDepthModel box = model_preset("sf-street");
  EXPECT_FALSE(pseudo_depth(box, heading_camera({0, 0, 0}, 0.0), principal(heading_camera({0, 0, 0}, 0.0))));
  EXPECT_FALSE(pseudo_depth(box, heading_camera({0, 0, 0}, M_PI), principal(heading_camera({0, 0, 0}, M_PI))));
}

TEST(PseudoDepth, BoxSideWallAndFloor) {
  const PseudoDepthModel box = model_preset("sf-street");
  const Camera side = heading_camera({0, 0, 0}, M_PI / 2.0);
  const auto d = pseudo_depth(box, side, principal(side));
  ASSERT_TRUE(d);
  EXPECT_NEAR(*d, 10.0, 1e-12);
  const Camera down = heading_camera({0, 0, 0}, 0.3, M_PI / 2.0);
  const auto f = pseudo_depth(box, down, principal(down));
  ASSERT_TRUE(f);
  EXPECT_NEAR(*f, 2.0, 1e-12);
  // Looking up with no top: the ray runs to an end wall, which counts as none.
  const Camera up = heading_camera({0, 0, 0}, 0.0, -M_PI / 2.0 + 1e-3);
  EXPECT_FALSE(pseudo_depth(box, up, principal(up)));
}

TEST(PseudoDepth, BoxFollowsDrivingDirection) {
  BoxModel b = std::get<BoxModel>(model_preset("sf-street"));
  b.driving_dir = Eigen::Vector3d(0.0, 1.0, 0.0);
  // Now +y is the driving direction and +x hits a side wall.
  const Camera cx = heading_camera({0, 0, 0}, 0.0);
  EXPECT_NEAR(*pseudo_depth(b, cx, principal(cx)), 10.0, 1e-12);
  const Camera cy = heading_camera({0, 0, 0}, M_PI / 2.0);
  EXPECT_FALSE(pseudo_depth(b, cy, principal(cy)));
}

TEST(PseudoOverlap, IdenticalCamerasGiveOne) {
  const Camera cam = heading_camera({0.3, 0.1, 1.2}, 0.4, 0.2);
  EXPECT_DOUBLE_EQ(pseudo_overlap(HemisphereModel{0.0, 3.0}, cam, cam), 1.0);
  EXPECT_DOUBLE_EQ(pseudo_overlap(model_preset("euroc-machine"), cam, cam), 1.0);
}

TEST(PseudoOverlap, OpposedCamerasGiveZero) {
  const Camera a = heading_camera({0.0, 0.0, 1.0}, 0.0);
  const Camera b = heading_camera({0.0, 0.0, 1.0}, M_PI);
  EXPECT_DOUBLE_EQ(pseudo_overlap(HemisphereModel{0.0, 3.0}, a, b), 0.0);
  EXPECT_DOUBLE_EQ(pseudo_overlap(HemisphereModel{0.0, 3.0}, b, a), 0.0);
}

TEST(PseudoOverlap, AsymmetricFieldOfView) {
  const CameraIntrinsics wide{40.0, 40.0, 64.0, 48.0}, narrow{200.0, 200.0, 64.0, 48.0};
  const Camera w = heading_camera({0.0, 0.0, 1.0}, 0.0, 0.1, wide);
  const Camera n = heading_camera({0.0, 0.0, 1.0}, 0.0, 0.1, narrow);
  const HemisphereModel m{0.0, 3.0};
  const double nw = pseudo_overlap(m, n, w);
  const double wn = pseudo_overlap(m, w, n);
  EXPECT_DOUBLE_EQ(nw, 1.0);
  // The narrow view covers about (40/200)^2 of the wide one.
  EXPECT_NEAR(wn, 0.04, 0.01);
  const auto pairs = generate_pairs({{"n", n, {}}, {"w", w, {}}}, m, {0.0, 1.0});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_DOUBLE_EQ(pairs[0].overlap, std::min(nw, wn));
}

TEST(PseudoOverlap, ForwardTranslationIsNonIncreasing) {
  const HemisphereModel m{0.0, 3.0};
  const Camera c0 = heading_camera({0.0, 0.0, 1.2}, 0.0);
  double prev = 1.0;
  for (int k = 1; k <= 30; ++k) {
    const Camera ck = heading_camera({0.1 * k, 0.0, 1.2}, 0.0);
    const double o = std::min(pseudo_overlap(m, c0, ck), pseudo_overlap(m, ck, c0));
    EXPECT_LE(o, prev + 1e-12) << "step " << k;
    prev = o;
  }
  EXPECT_LT(prev, 0.9);
}

TEST(PseudoOverlap, SampleCountIsRespected) {
  const Camera a = heading_camera({0.0, 0.0, 1.0}, 0.0);
  const Camera b = heading_camera({0.0, 0.0, 1.0}, 0.5);
  const double o = pseudo_overlap(HemisphereModel{0.0, 3.0}, a, b, 8);
  EXPECT_DOUBLE_EQ(o * 64.0, std::round(o * 64.0));
  EXPECT_THROW(pseudo_overlap(HemisphereModel{}, a, b, 0), Error);
}

TEST(Pairgen, PresetsCarryTheirValues) {
  const auto machine = std::get<HemisphereModel>(model_preset("euroc-machine"));
  EXPECT_EQ(machine.z_plane, -2.0);
  EXPECT_EQ(machine.r_sphere, 10.0);
  const auto room = std::get<HemisphereModel>(model_preset("euroc-room"));
  EXPECT_EQ(room.z_plane, 0.0);
  EXPECT_EQ(room.r_sphere, 3.0);
  const auto street = std::get<BoxModel>(model_preset("sf-street"));
  EXPECT_EQ(street.side, 10.0);
  EXPECT_EQ(street.bottom, -2.0);
  EXPECT_EQ(street.longitudinal, 25.0);
  EXPECT_THROW(model_preset("office"), Error);
}

TEST(Pairgen, SinglePoseGivesNoPairs) {
  EXPECT_TRUE(generate_pairs({{"0", heading_camera({0, 0, 1}, 0.0), {}}}, HemisphereModel{}, {}).empty());
  EXPECT_TRUE(generate_pairs({}, HemisphereModel{}, {}).empty());
}

TEST(Pairgen, NearIdenticalFramesAreExcluded) {
  std::vector<PoseRecord> poses;
  for (int k = 0; k < 4; ++k) poses.push_back({std::to_string(k), heading_camera({0.001 * k, 0, 1}, 0.0), {}});
  EXPECT_TRUE(generate_pairs(poses, HemisphereModel{0.0, 3.0}, {0.3, 0.9}).empty());
}

TEST(Pairgen, OrderingStrideAndRange) {
  std::vector<PoseRecord> poses;
  for (int k = 0; k < 12; ++k) poses.push_back({std::to_string(k), heading_camera({0, 0, 1}, 0.12 * k), {}});
  const HemisphereModel m{0.0, 3.0};
  const OverlapRange range{0.3, 0.8};
  const auto all = generate_pairs(poses, m, range);
  ASSERT_FALSE(all.empty());
  for (std::size_t k = 0; k < all.size(); ++k) {
    EXPECT_LT(all[k].i, all[k].j);
    EXPECT_GE(all[k].overlap, range.min);
    EXPECT_LE(all[k].overlap, range.max);
    if (k > 0) EXPECT_TRUE(std::pair(all[k - 1].i, all[k - 1].j) < std::pair(all[k].i, all[k].j));
  }
  const auto strided = generate_pairs(poses, m, range, {32, 3});
  for (const auto& p : strided) {
    EXPECT_EQ(p.i % 3, 0);
    EXPECT_EQ(p.j % 3, 0);
  }
  EXPECT_THROW(generate_pairs(poses, m, {0.8, 0.3}), Error);
  EXPECT_THROW(generate_pairs(poses, m, range, {32, 0}), Error);
}

TEST(Pairgen, BoxModelsTakeDirectionFromTrajectory) {
  std::vector<PoseRecord> poses;
  for (int k = 0; k < 3; ++k) poses.push_back({std::to_string(k), heading_camera({0.0, 2.0 * k, 1.5}, 0.3), {}});
  const auto models = instantiate_models(model_preset("sf-street"), poses);
  for (const auto& m : models) {
    EXPECT_LT((std::get<BoxModel>(m).driving_dir - Eigen::Vector3d::UnitY()).norm(), 1e-12);
  }
}

// Oracle: exact overlap inside a closed box room [-4,4]x[-4,4]x[0,3] (convex,
// so there is no occlusion), by ray casting against the true walls.
double true_overlap(const Camera& ci, const Camera& cj, int samples = 32) {
  const Eigen::Vector3d lo(-4.0, -4.0, 0.0), hi(4.0, 4.0, 3.0);
  const Eigen::Vector3d C = ci.centre();
  int hits = 0;
  for (int b = 0; b < samples; ++b) {
    for (int a = 0; a < samples; ++a) {
      const double u = (a + 0.5) * 2.0 * ci.intrinsics.cx / samples;
      const double v = (b + 0.5) * 2.0 * ci.intrinsics.cy / samples;
      const Eigen::Vector3d d = ci.pose.R.transpose() *
                                Eigen::Vector3d((u - ci.intrinsics.cx) / ci.intrinsics.fx,
                                                (v - ci.intrinsics.cy) / ci.intrinsics.fy, 1.0);
      double s = 1e300;
      for (int k = 0; k < 3; ++k) {
        if (d(k) > 0) s = std::min(s, (hi(k) - C(k)) / d(k));
        if (d(k) < 0) s = std::min(s, (lo(k) - C(k)) / d(k));
      }
      const Eigen::Vector3d X = cj.pose.R * (C + s * d) + cj.pose.t;
      if (X.z() <= 0) continue;
      const double uj = cj.intrinsics.fx * X.x() / X.z() + cj.intrinsics.cx;
      const double vj = cj.intrinsics.fy * X.y() / X.z() + cj.intrinsics.cy;
      if (uj >= 0 && uj < 2 * cj.intrinsics.cx && vj >= 0 && vj < 2 * cj.intrinsics.cy) ++hits;
    }
  }
  return static_cast<double>(hits) / (samples * samples);
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * (i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(PseudoOverlap, RankCorrelatesWithTrueOverlap) {
  // A handheld loop around the room.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Camera> cams;
  for (int k = 0; k < 24; ++k) {
    const double phase = 2.0 * M_PI * k / 24.0;
    const Eigen::Vector3d C(1.8 * std::cos(phase) + 0.2 * n(rng), 1.8 * std::sin(phase) + 0.2 * n(rng),
                            1.4 + 0.1 * n(rng));
    cams.push_back(heading_camera(C, phase + M_PI / 2.0 + 0.3 * n(rng), 0.15 + 0.1 * n(rng)));
  }
  const PseudoDepthModel m = model_preset("euroc-room");
  std::vector<double> pseudo, truth;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    for (std::size_t j = i + 1; j < cams.size(); ++j) {
      pseudo.push_back(std::min(pseudo_overlap(m, cams[i], cams[j]), pseudo_overlap(m, cams[j], cams[i])));
      truth.push_back(std::min(true_overlap(cams[i], cams[j]), true_overlap(cams[j], cams[i])));
    }
  }
  EXPECT_GT(spearman(pseudo, truth), 0.7);
}

}  // namespace
}  // namespace epimatch

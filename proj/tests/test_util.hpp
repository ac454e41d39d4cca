#pragma once

// Shared synthetic-geometry generators for the test suites.

#include <random>
#include <vector>

#include "epimatch/geometry.hpp"
#include "epimatch/robust.hpp"

namespace epimatch::testing {

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng, double max_angle_rad) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(0.0, max_angle_rad);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  return rotation_from_axis_angle(axis, a(rng));
}

inline CameraIntrinsics random_intrinsics(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> f(300.0, 700.0);
  std::uniform_real_distribution<double> c(-20.0, 20.0);
  return {f(rng), f(rng), 320.0 + c(rng), 240.0 + c(rng)};
}

struct CameraPair {
  Camera cam1;
  Camera cam2;
  RelativePose rel;
};

// Camera 1 at the world origin, camera 2 displaced by a unit-scale baseline
// and rotated by up to 25 degrees.
inline CameraPair random_camera_pair(std::mt19937_64& rng, bool same_intrinsics = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  CameraPair p;
  p.cam1.intrinsics = random_intrinsics(rng);
  p.cam2.intrinsics = same_intrinsics ? p.cam1.intrinsics : random_intrinsics(rng);
  p.cam1.pose = RelativePose{};
  p.cam2.pose.R = random_rotation(rng, 25.0 * M_PI / 180.0);
  Eigen::Vector3d t(n(rng), n(rng), 0.3 * n(rng));
  p.cam2.pose.t = t.normalized() * std::uniform_real_distribution<double>(0.3, 1.5)(rng);
  p.rel = RelativePose::between(p.cam1.pose, p.cam2.pose);
  return p;
}

// 3D points in front of both cameras (and inside a generous image window).
inline std::vector<Point3> visible_points(std::mt19937_64& rng, const CameraPair& pair, int count) {
  std::uniform_real_distribution<double> xy(-2.5, 2.5);
  std::uniform_real_distribution<double> z(4.0, 10.0);
  std::vector<Point3> pts;
  while (static_cast<int>(pts.size()) < count) {
    Point3 X(xy(rng), xy(rng), z(rng));
    const double z2 = (pair.cam2.pose.R * X + pair.cam2.pose.t).z();
    if (z2 > 0.5) pts.push_back(X);
  }
  return pts;
}

inline std::vector<Correspondence> exact_matches(const CameraPair& pair,
                                                 const std::vector<Point3>& pts) {
  std::vector<Correspondence> out;
  for (const auto& X : pts) {
    out.push_back({project(pair.cam1, X).pixel, project(pair.cam2, X).pixel, 1.0});
  }
  return out;
}

inline double max_abs_diff(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace epimatch::testing

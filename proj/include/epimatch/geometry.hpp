#pragma once

// Two-view epipolar geometry on plain Eigen values.
//
// Conventions:
//  * Camera poses are world-to-camera: X_cam = R * X_world + t.
//  * A RelativePose maps camera-1 coordinates into camera 2 (P1 = K1[I|0],
//    P2 = K2[R|t]).
//  * Pixel coordinates are continuous: pixel (col, row) covers
//    [col, col+1) x [row, row+1), so its centre sits at (col+0.5, row+0.5).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <utility>
#include <vector>

#include "epimatch/error.hpp"

namespace epimatch {

using Point3 = Eigen::Vector3d;

struct HomPoint2 {
  double u = 0.0;
  double v = 0.0;
  double w = 1.0;

  HomPoint2() = default;
  HomPoint2(double u_, double v_, double w_ = 1.0) : u(u_), v(v_), w(w_) {}
  explicit HomPoint2(const Eigen::Vector3d& x) : u(x.x()), v(x.y()), w(x.z()) {}

  Eigen::Vector3d vec() const { return {u, v, w}; }
  bool at_infinity() const { return w == 0.0; }
  // Divides through by w. Throws PointAtInfinity when w == 0.
  HomPoint2 normalized() const;
  Eigen::Vector2d xy() const;
};

struct Line2 {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  Line2() = default;
  Line2(double a_, double b_, double c_) : a(a_), b(b_), c(c_) {}
  explicit Line2(const Eigen::Vector3d& l) : a(l.x()), b(l.y()), c(l.z()) {}

  Eigen::Vector3d vec() const { return {a, b, c}; }
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  static CameraIntrinsics identity() { return {1.0, 1.0, 0.0, 0.0}; }

  Eigen::Matrix3d K() const;
  Eigen::Matrix3d K_inv() const;
  void validate() const;
};

struct RelativePose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  // Relative motion taking camera-1 coordinates into camera-2 coordinates.
  static RelativePose between(const RelativePose& world_to_cam1, const RelativePose& world_to_cam2);
  void validate(double tol = 1e-12) const;
};

struct Camera {
  CameraIntrinsics intrinsics;
  RelativePose pose;  // world-to-camera

  Eigen::Matrix<double, 3, 4> projection() const;
  Eigen::Vector3d centre() const;
};

struct FundamentalMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();

  FundamentalMatrix() = default;
  explicit FundamentalMatrix(const Eigen::Matrix3d& mat) : m(mat) {}
  FundamentalMatrix transposed() const { return FundamentalMatrix(m.transpose()); }
};

struct EssentialMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();

  EssentialMatrix() = default;
  explicit EssentialMatrix(const Eigen::Matrix3d& mat) : m(mat) {}
};

struct Projection {
  HomPoint2 pixel;
  double depth = 0.0;
};

// A correspondence expressed in K-normalized coordinates (w = 1).
struct NormalizedMatch {
  HomPoint2 x1;
  HomPoint2 x2;
};

/// Skew-symmetric matrix [t]x with [t]x v = t x v.
Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& t);

/// Frobenius norm 1, largest-magnitude entry positive.
Eigen::Matrix3d canonicalize(const Eigen::Matrix3d& m);

/// F = K2^-T [t]x R K1^-1, canonicalized. Pure rotations (|t| <= 1e-8 *
/// scene_scale) have no epipolar constraint and raise DegenerateBaseline.
FundamentalMatrix fundamental_from_pose(const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                                        const RelativePose& pose, double scene_scale = 1.0);

/// E = [t]x R with t normalized to unit length.
EssentialMatrix essential_from_pose(const RelativePose& pose, double scene_scale = 1.0);

/// E = K2^T F K1.
EssentialMatrix essential_from_fundamental(const FundamentalMatrix& F, const CameraIntrinsics& K1,
                                           const CameraIntrinsics& K2);

/// Epipolar line l12 = F x1 in image 2.
Line2 epipolar_line(const FundamentalMatrix& F, const HomPoint2& x1);

/// x2^T F x1.
double epipolar_residual(const FundamentalMatrix& F, const HomPoint2& x1, const HomPoint2& x2);

double point_line_distance(const Line2& l, const HomPoint2& x);

/// r^2 * (1/|(Fx1)_12|^2 + 1/|(F^T x2)_12|^2) with r = x2^T F x1.
double symmetric_epipolar_distance_sq(const FundamentalMatrix& F, const HomPoint2& x1,
                                      const HomPoint2& x2);

HomPoint2 normalize_point(const CameraIntrinsics& K, const HomPoint2& x);
HomPoint2 denormalize_point(const CameraIntrinsics& K, const HomPoint2& x);

/// Pixel and depth of X; BehindCamera when depth <= 0.
Projection project(const Camera& camera, const Point3& X);

/// Linear (DLT) triangulation.
Point3 triangulate(const Camera& cam1, const Camera& cam2, const HomPoint2& x1, const HomPoint2& x2);

/// Picks the (R, +-t) factorization of E with the most points in front of both
/// cameras. The returned t has unit norm.
RelativePose decompose_essential(const EssentialMatrix& E, std::span<const NormalizedMatch> matches);

// Rotation helpers shared by the synthetic generator and the metrics.
Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& axis, double angle_rad);
double rotation_angle(const Eigen::Matrix3d& R);
Eigen::Matrix3d rotation_from_quaternion(double qw, double qx, double qy, double qz);
Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& R);  // (w, x, y, z)

}  // namespace epimatch

#include "epimatch/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>

namespace epimatch {

HomPoint2 HomPoint2::normalized() const {
  EPIMATCH_REQUIRE(w != 0.0, ErrorCode::kPointAtInfinity, "cannot normalize a point at infinity");
  return {u / w, v / w, 1.0};
}

Eigen::Vector2d HomPoint2::xy() const {
  const HomPoint2 n = normalized();
  return {n.u, n.v};
}

Eigen::Matrix3d CameraIntrinsics::K() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::K_inv() const {
  Eigen::Matrix3d k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::validate() const {
  EPIMATCH_REQUIRE(std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0,
                   ErrorCode::kInvalidArgument, "focal lengths must be positive");
  EPIMATCH_REQUIRE(std::isfinite(cx) && std::isfinite(cy), ErrorCode::kInvalidArgument,
                   "principal point must be finite");
}

RelativePose RelativePose::between(const RelativePose& c1, const RelativePose& c2) {
  RelativePose rel;
  rel.R = c2.R * c1.R.transpose();
  rel.t = c2.t - rel.R * c1.t;
  return rel;
}

void RelativePose::validate(double tol) const {
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  EPIMATCH_REQUIRE(ortho <= tol, ErrorCode::kInvalidArgument, "R is not orthonormal");
  EPIMATCH_REQUIRE(std::abs(R.determinant() - 1.0) <= tol, ErrorCode::kInvalidArgument,
                   "det(R) != +1");
  EPIMATCH_REQUIRE(t.allFinite(), ErrorCode::kInvalidArgument, "t is not finite");
}

Eigen::Matrix<double, 3, 4> Camera::projection() const {
  Eigen::Matrix<double, 3, 4> Rt;
  Rt.leftCols<3>() = pose.R;
  Rt.col(3) = pose.t;
  return intrinsics.K() * Rt;
}

Eigen::Vector3d Camera::centre() const { return -pose.R.transpose() * pose.t; }

Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& t) {
  Eigen::Matrix3d m;
  m << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  return m;
}

Eigen::Matrix3d canonicalize(const Eigen::Matrix3d& m) {
  const double norm = m.norm();
  EPIMATCH_REQUIRE(norm > 0.0 && std::isfinite(norm), ErrorCode::kDegenerateConfiguration,
                   "cannot canonicalize a zero matrix");
  Eigen::Matrix3d out = m / norm;
  // Row-major scan so ties resolve the same way everywhere.
  int best_r = 0;
  int best_c = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (std::abs(out(r, c)) > std::abs(out(best_r, best_c)) + 1e-15) {
        best_r = r;
        best_c = c;
      }
    }
  }
  if (out(best_r, best_c) < 0.0) out = -out;
  return out;
}

namespace {

void require_baseline(const RelativePose& pose, double scene_scale) {
  const double eps = 1e-8 * scene_scale;
  EPIMATCH_REQUIRE(pose.t.norm() > eps, ErrorCode::kDegenerateBaseline,
                   "translation below baseline epsilon; pure rotation has no epipolar constraint");
}

}  // namespace

FundamentalMatrix fundamental_from_pose(const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                                        const RelativePose& pose, double scene_scale) {
  require_baseline(pose, scene_scale);
  const Eigen::Matrix3d F =
      K2.K_inv().transpose() * cross_matrix(pose.t) * pose.R * K1.K_inv();
  return FundamentalMatrix(canonicalize(F));
}

EssentialMatrix essential_from_pose(const RelativePose& pose, double scene_scale) {
  require_baseline(pose, scene_scale);
  return EssentialMatrix(cross_matrix(pose.t.normalized()) * pose.R);
}

EssentialMatrix essential_from_fundamental(const FundamentalMatrix& F, const CameraIntrinsics& K1,
                                           const CameraIntrinsics& K2) {
  return EssentialMatrix(K2.K().transpose() * F.m * K1.K());
}

Line2 epipolar_line(const FundamentalMatrix& F, const HomPoint2& x1) {
  const Eigen::Vector3d l = F.m * x1.vec();
  const double scale = F.m.norm() * x1.vec().norm();
  EPIMATCH_REQUIRE(l.norm() > 1e-14 * std::max(scale, 1e-300), ErrorCode::kEpipoleQuery,
                   "query point is the epipole");
  return Line2(l);
}

double epipolar_residual(const FundamentalMatrix& F, const HomPoint2& x1, const HomPoint2& x2) {
  return x2.vec().dot(F.m * x1.vec());
}

double point_line_distance(const Line2& l, const HomPoint2& x) {
  const double n = std::hypot(l.a, l.b);
  EPIMATCH_REQUIRE(n > 0.0, ErrorCode::kDegenerateLine, "line has (a, b) = (0, 0)");
  const HomPoint2 p = x.normalized();
  return std::abs(l.a * p.u + l.b * p.v + l.c) / n;
}

double symmetric_epipolar_distance_sq(const FundamentalMatrix& F, const HomPoint2& x1,
                                      const HomPoint2& x2) {
  const Eigen::Vector3d p1 = x1.normalized().vec();
  const Eigen::Vector3d p2 = x2.normalized().vec();
  const Eigen::Vector3d l2 = F.m * p1;
  const Eigen::Vector3d l1 = F.m.transpose() * p2;
  const double d2 = l2.x() * l2.x() + l2.y() * l2.y();
  const double d1 = l1.x() * l1.x() + l1.y() * l1.y();
  EPIMATCH_REQUIRE(d1 > 0.0 && d2 > 0.0, ErrorCode::kDegenerateLine,
                   "epipolar line with vanishing normal");
  const double r = p2.dot(l2);
  return r * r * (1.0 / d2 + 1.0 / d1);
}

HomPoint2 normalize_point(const CameraIntrinsics& K, const HomPoint2& x) {
  const HomPoint2 p = x.normalized();
  return {(p.u - K.cx) / K.fx, (p.v - K.cy) / K.fy, 1.0};
}

HomPoint2 denormalize_point(const CameraIntrinsics& K, const HomPoint2& x) {
  const HomPoint2 p = x.normalized();
  return {p.u * K.fx + K.cx, p.v * K.fy + K.cy, 1.0};
}

Projection project(const Camera& camera, const Point3& X) {
  EPIMATCH_REQUIRE(X.allFinite(), ErrorCode::kInvalidArgument, "point is not finite");
  const Eigen::Vector3d Xc = camera.pose.R * X + camera.pose.t;
  EPIMATCH_REQUIRE(Xc.z() > 0.0, ErrorCode::kBehindCamera, "point has non-positive depth");
  const Eigen::Vector3d x = camera.intrinsics.K() * Xc;
  return {HomPoint2(x.x() / x.z(), x.y() / x.z(), 1.0), Xc.z()};
}

namespace {

// Homogeneous DLT solution plus the ratio of the two smallest singular values.
Eigen::Vector4d triangulate_homogeneous(const Eigen::Matrix<double, 3, 4>& P1,
                                        const Eigen::Matrix<double, 3, 4>& P2,
                                        const Eigen::Vector2d& x1, const Eigen::Vector2d& x2,
                                        double* conditioning) {
  Eigen::Matrix4d A;
  A.row(0) = x1.x() * P1.row(2) - P1.row(0);
  A.row(1) = x1.y() * P1.row(2) - P1.row(1);
  A.row(2) = x2.x() * P2.row(2) - P2.row(0);
  A.row(3) = x2.y() * P2.row(2) - P2.row(1);
  for (int r = 0; r < 4; ++r) {
    const double n = A.row(r).norm();
    if (n > 0.0) A.row(r) /= n;
  }
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  if (conditioning != nullptr) {
    const auto& s = svd.singularValues();
    *conditioning = s(0) > 0.0 ? s(2) / s(0) : 0.0;
  }
  return svd.matrixV().col(3);
}

}  // namespace

Point3 triangulate(const Camera& cam1, const Camera& cam2, const HomPoint2& x1, const HomPoint2& x2) {
  EPIMATCH_REQUIRE((cam1.centre() - cam2.centre()).norm() > 0.0,
                   ErrorCode::kDegenerateConfiguration, "cameras share a centre");
  double cond = 0.0;
  const Eigen::Vector4d X =
      triangulate_homogeneous(cam1.projection(), cam2.projection(), x1.xy(), x2.xy(), &cond);
  EPIMATCH_REQUIRE(cond > 1e-14, ErrorCode::kDegenerateConfiguration,
                   "triangulation system is rank-deficient");
  EPIMATCH_REQUIRE(std::abs(X(3)) > 1e-300, ErrorCode::kDegenerateConfiguration,
                   "triangulated point at infinity");
  return X.head<3>() / X(3);
}

RelativePose decompose_essential(const EssentialMatrix& E, std::span<const NormalizedMatch> matches) {
  EPIMATCH_REQUIRE(!matches.empty(), ErrorCode::kNotEnoughMatches,
                   "decomposition needs at least one correspondence");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(E.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  Eigen::Matrix3d V = svd.matrixV();
  if (U.determinant() < 0.0) U.col(2) = -U.col(2);
  if (V.determinant() < 0.0) V.col(2) = -V.col(2);
  Eigen::Matrix3d W;
  W << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Eigen::Matrix3d Ra = U * W * V.transpose();
  const Eigen::Matrix3d Rb = U * W.transpose() * V.transpose();
  const Eigen::Vector3d u3 = U.col(2).normalized();

  const std::array<RelativePose, 4> candidates = {
      RelativePose{Ra, u3}, RelativePose{Ra, -u3}, RelativePose{Rb, u3}, RelativePose{Rb, -u3}};

  Eigen::Matrix<double, 3, 4> P1 = Eigen::Matrix<double, 3, 4>::Zero();
  P1.leftCols<3>().setIdentity();

  std::array<int, 4> votes{};
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    Eigen::Matrix<double, 3, 4> P2;
    P2.leftCols<3>() = candidates[c].R;
    P2.col(3) = candidates[c].t;
    for (const auto& m : matches) {
      const Eigen::Vector4d X = triangulate_homogeneous(P1, P2, m.x1.xy(), m.x2.xy(), nullptr);
      if (X(3) == 0.0) continue;
      const Eigen::Vector3d Xe = X.head<3>() / X(3);
      const double z1 = Xe.z();
      const double z2 = (candidates[c].R * Xe + candidates[c].t).z();
      if (z1 > 0.0 && z2 > 0.0) ++votes[c];
    }
  }
  std::array<int, 4> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return votes[a] > votes[b]; });
  EPIMATCH_REQUIRE(votes[order[0]] > votes[order[1]], ErrorCode::kAmbiguousCheirality,
                   "two pose candidates tie in the cheirality vote");
  return candidates[order[0]];
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
  if (axis.norm() == 0.0 || angle_rad == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

double rotation_angle(const Eigen::Matrix3d& R) {
  // atan2 keeps full precision for tiny angles where acos(trace) does not.
  const Eigen::Vector3d axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::atan2(0.5 * axis.norm(), c);
}

Eigen::Matrix3d rotation_from_quaternion(double qw, double qx, double qy, double qz) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  EPIMATCH_REQUIRE(q.norm() > 0.0, ErrorCode::kFormat, "zero quaternion");
  return q.normalized().toRotationMatrix();
}

Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace epimatch

#include "epimatch/robust.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace epimatch {

void RansacConfig::validate() const {
  EPIMATCH_REQUIRE(iterations >= 1, ErrorCode::kInvalidArgument, "iterations must be >= 1");
  EPIMATCH_REQUIRE(inlier_threshold > 0.0, ErrorCode::kInvalidArgument,
                   "inlier_threshold must be positive");
  EPIMATCH_REQUIRE(min_sample == 8, ErrorCode::kInvalidArgument, "only the 8-point sample is supported");
}

bool RansacResult::operator==(const RansacResult& o) const {
  return F.m == o.F.m && inlier_mask == o.inlier_mask && inlier_count == o.inlier_count &&
         num_input_matches == o.num_input_matches && no_consensus == o.no_consensus &&
         best_iteration == o.best_iteration && hypothesis_inlier_mask == o.hypothesis_inlier_mask &&
         hypothesis_inlier_count == o.hypothesis_inlier_count;
}

namespace {

// Translate to the centroid and scale to mean distance sqrt(2).
Eigen::Matrix3d hartley_transform(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d = p - mean;
    mean_dist += d.norm();
    cov += d * d.transpose();
  }
  mean_dist /= static_cast<double>(pts.size());
  EPIMATCH_REQUIRE(mean_dist > 1e-12, ErrorCode::kDegenerateConfiguration, "all points coincide");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  EPIMATCH_REQUIRE(eig.eigenvalues()(0) > 1e-12 * eig.eigenvalues()(1),
                   ErrorCode::kDegenerateConfiguration, "points are collinear");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d T;
  T << s, 0.0, -s * mean.x(), 0.0, s, -s * mean.y(), 0.0, 0.0, 1.0;
  return T;
}

// Nothrow scoring kernel; degenerate lines count as outliers.
double sym_dist_sq(const Eigen::Matrix3d& E, const Eigen::Vector3d& n1, const Eigen::Vector3d& n2) {
  const Eigen::Vector3d l2 = E * n1;
  const Eigen::Vector3d l1 = E.transpose() * n2;
  const double d2 = l2.x() * l2.x() + l2.y() * l2.y();
  const double d1 = l1.x() * l1.x() + l1.y() * l1.y();
  if (!(d1 > 0.0) || !(d2 > 0.0)) return std::numeric_limits<double>::infinity();
  const double r = n2.dot(l2);
  return r * r * (1.0 / d2 + 1.0 / d1);
}

struct Scored {
  std::vector<bool> mask;
  std::size_t count = 0;
};

Scored score(const Eigen::Matrix3d& E, const std::vector<Eigen::Vector3d>& n1,
             const std::vector<Eigen::Vector3d>& n2, double threshold) {
  Scored s;
  s.mask.assign(n1.size(), false);
  for (std::size_t k = 0; k < n1.size(); ++k) {
    if (sym_dist_sq(E, n1[k], n2[k]) < threshold) {
      s.mask[k] = true;
      ++s.count;
    }
  }
  return s;
}

}  // namespace

FundamentalMatrix eight_point(std::span<const Correspondence> matches) {
  EPIMATCH_REQUIRE(matches.size() >= 8, ErrorCode::kNotEnoughMatches,
                   "eight_point needs at least 8 matches, got " + std::to_string(matches.size()));
  const std::size_t n = matches.size();
  std::vector<Eigen::Vector2d> p1(n), p2(n);
  for (std::size_t k = 0; k < n; ++k) {
    p1[k] = matches[k].x1.xy();
    p2[k] = matches[k].x2.xy();
  }
  const Eigen::Matrix3d T1 = hartley_transform(p1);
  const Eigen::Matrix3d T2 = hartley_transform(p2);

  Eigen::Matrix<double, Eigen::Dynamic, 9> A(static_cast<Eigen::Index>(std::max<std::size_t>(n, 9)), 9);
  A.setZero();
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector3d a = T1 * p1[k].homogeneous();
    const Eigen::Vector3d b = T2 * p2[k].homogeneous();
    A.row(static_cast<Eigen::Index>(k)) << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(),
        b.y() * a.y(), b.y(), a.x(), a.y(), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  // Planar scenes leave a 3-dimensional null space, which still yields a valid
  // F; anything wider means the sample carries no epipolar information.
  EPIMATCH_REQUIRE(s(5) > 1e-10 * s(0), ErrorCode::kDegenerateConfiguration,
                   "eight-point system is rank-deficient");
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Eigen::Matrix3d Fn;
  Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sv = fsvd.singularValues();
  sv(2) = 0.0;
  Fn = fsvd.matrixU() * sv.asDiagonal() * fsvd.matrixV().transpose();

  return FundamentalMatrix(canonicalize(T2.transpose() * Fn * T1));
}

RansacResult ransac_fundamental(std::span<const Correspondence> matches, const CameraIntrinsics& K1,
                                const CameraIntrinsics& K2, const RansacConfig& cfg) {
  cfg.validate();
  const std::size_t n = matches.size();
  EPIMATCH_REQUIRE(n >= static_cast<std::size_t>(cfg.min_sample), ErrorCode::kNotEnoughMatches,
                   "RANSAC needs at least 8 matches, got " + std::to_string(n));

  std::vector<Eigen::Vector3d> n1(n), n2(n);
  for (std::size_t k = 0; k < n; ++k) {
    n1[k] = normalize_point(K1, matches[k].x1).vec();
    n2[k] = normalize_point(K2, matches[k].x2).vec();
  }
  const Eigen::Matrix3d K1m = K1.K();
  const Eigen::Matrix3d K2t = K2.K().transpose();

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> pool(n);
  std::vector<Correspondence> sample(static_cast<std::size_t>(cfg.min_sample));

  RansacResult best;
  best.num_input_matches = n;
  Scored best_score;
  for (int it = 0; it < cfg.iterations; ++it) {
    // Partial Fisher-Yates over a fresh index pool keeps draws reproducible.
    for (std::size_t k = 0; k < n; ++k) pool[k] = k;
    for (int s = 0; s < cfg.min_sample; ++s) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(s), n - 1);
      std::swap(pool[static_cast<std::size_t>(s)], pool[pick(rng)]);
      sample[static_cast<std::size_t>(s)] = matches[pool[static_cast<std::size_t>(s)]];
    }
    FundamentalMatrix F;
    try {
      F = eight_point(sample);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConfiguration) continue;
      throw;
    }
    Scored sc = score(K2t * F.m * K1m, n1, n2, cfg.inlier_threshold);
    if (best.best_iteration < 0 || sc.count > best_score.count) {
      best.best_iteration = it;
      best.F = F;
      best_score = std::move(sc);
    }
  }
  EPIMATCH_REQUIRE(best.best_iteration >= 0, ErrorCode::kNoValidHypothesis,
                   "every RANSAC sample was degenerate");

  best.hypothesis_inlier_mask = best_score.mask;
  best.hypothesis_inlier_count = best_score.count;

  Scored final_score = best_score;
  if (best_score.count >= 8) {
    std::vector<Correspondence> inliers;
    inliers.reserve(best_score.count);
    for (std::size_t k = 0; k < n; ++k) {
      if (best_score.mask[k]) inliers.push_back(matches[k]);
    }
    try {
      const FundamentalMatrix refit = eight_point(inliers);
      best.F = refit;
      final_score = score(K2t * refit.m * K1m, n1, n2, cfg.inlier_threshold);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateConfiguration) throw;
    }
  }
  best.inlier_mask = std::move(final_score.mask);
  best.inlier_count = final_score.count;
  best.no_consensus = best.inlier_count <= static_cast<std::size_t>(cfg.min_sample);
  return best;
}

PoseEstimate estimate_relative_pose(std::span<const Correspondence> matches,
                                    const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                                    const RansacConfig& cfg) {
  PoseEstimate out;
  out.ransac = ransac_fundamental(matches, K1, K2, cfg);
  const EssentialMatrix E = essential_from_fundamental(out.ransac.F, K1, K2);
  std::vector<NormalizedMatch> inliers;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    if (!out.ransac.inlier_mask[k]) continue;
    inliers.push_back({normalize_point(K1, matches[k].x1), normalize_point(K2, matches[k].x2)});
  }
  EPIMATCH_REQUIRE(!inliers.empty(), ErrorCode::kNotEnoughMatches, "no inliers to decompose");
  out.pose = decompose_essential(E, inliers);
  return out;
}

}  // namespace epimatch

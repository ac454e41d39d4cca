#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "epimatch/geometry.hpp"

namespace epimatch {

struct Correspondence {
  HomPoint2 x1;  // pixels, image 1
  HomPoint2 x2;  // pixels, image 2
  double confidence = 1.0;
};

struct RansacConfig {
  int iterations = 500;
  // Squared symmetric epipolar distance in K-normalized coordinates.
  double inlier_threshold = 1e-5;
  std::uint64_t seed = 0;
  int min_sample = 8;

  void validate() const;
};

struct RansacResult {
  FundamentalMatrix F;
  std::vector<bool> inlier_mask;
  std::size_t inlier_count = 0;
  std::size_t num_input_matches = 0;
  // Set when the best consensus is no larger than a minimal sample.
  bool no_consensus = false;
  // Winning minimal hypothesis before the refit on its inliers.
  int best_iteration = -1;
  std::vector<bool> hypothesis_inlier_mask;
  std::size_t hypothesis_inlier_count = 0;

  bool operator==(const RansacResult& other) const;
};

/// Hartley-normalized linear 8-point solver with rank-2 enforcement.
FundamentalMatrix eight_point(std::span<const Correspondence> matches);

/// Seeded fixed-iteration RANSAC around eight_point. Inliers are scored with
/// the squared symmetric epipolar distance of E = K2^T F K1 on K-normalized
/// points. Ties between hypotheses keep the earliest iteration.
RansacResult ransac_fundamental(std::span<const Correspondence> matches, const CameraIntrinsics& K1,
                                const CameraIntrinsics& K2, const RansacConfig& cfg);

struct PoseEstimate {
  RelativePose pose;  // unit-norm t
  RansacResult ransac;
};

/// RANSAC F, E = K2^T F K1, then cheirality-voted decomposition on the inliers.
PoseEstimate estimate_relative_pose(std::span<const Correspondence> matches,
                                    const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                                    const RansacConfig& cfg);

}  // namespace epimatch

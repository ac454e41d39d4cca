#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "epimatch/matcher.hpp"
#include "epimatch/robust.hpp"
#include "epimatch/synth.hpp"

namespace epimatch {

struct PoseError {
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
  double combined = 0.0;  // max of the two; +inf for a failed estimate
};

/// Angle of R_gt^T R_est in degrees.
double rotation_error(const Eigen::Matrix3d& R_gt, const Eigen::Matrix3d& R_est);

/// Angle between the translation directions in degrees, ignoring sign.
double translation_error(const Eigen::Vector3d& t_gt, const Eigen::Vector3d& t_est);

PoseError pose_error(const RelativePose& gt, const RelativePose& est);

/// Area under recall(x) = fraction of errors <= x on [0, T], over T, in
/// percent, for each threshold T. Infinite errors never count as recalled.
std::vector<double> pose_auc(std::span<const double> errors, std::span<const double> thresholds);
std::vector<double> pose_auc(std::span<const double> errors);  // thresholds 5, 10, 20

/// Percentage of matches whose squared symmetric epipolar distance under E
/// (on K-normalized points) is below threshold. An empty set scores 0.
double matching_precision(std::span<const Correspondence> matches, const EssentialMatrix& E_gt,
                          const CameraIntrinsics& K1, const CameraIntrinsics& K2, double threshold);
double matching_precision(std::span<const Correspondence> matches, const FundamentalMatrix& F_gt,
                          const CameraIntrinsics& K1, const CameraIntrinsics& K2, double threshold);

inline constexpr double kIndoorPrecisionThreshold = 5e-4;
inline constexpr double kOutdoorPrecisionThreshold = 1e-4;

struct EvalConfig {
  MatcherConfig matcher;
  RansacConfig ransac;
  // The RANSAC inlier threshold is 2 * (ransac_threshold_px / f)^2, the
  // squared symmetric distance of a match off by this many pixels in both views.
  double ransac_threshold_px = 1.0;
  double precision_threshold = kIndoorPrecisionThreshold;
};

struct PairEval {
  int index = 0;
  int num_matches = 0;
  double precision = 0.0;
  PoseError error;
  bool failed = false;
};

struct EvalReport {
  double auc5 = 0.0, auc10 = 0.0, auc20 = 0.0;
  double precision = 0.0;  // per-pair mean
  double median_rot_deg = 0.0, median_trans_deg = 0.0;
  int n_pairs = 0;
  int n_failed = 0;  // pose estimation failed or no matches
  std::vector<PairEval> pairs;

  std::string to_json() const;
  /// Aligned text table: Method | AUC@5 | AUC@10 | AUC@20 | P, then medians and counts.
  std::string to_table(const std::string& method) const;
};

using MatchProvider = std::function<std::vector<Correspondence>(const RenderedPair& pair, int index)>;

/// Matches from the learned matcher (fine matches, pixel coordinates).
std::vector<Correspondence> predict_matches(const RenderedPair& pair, const MatcherParams& params,
                                            const MatcherConfig& cfg);

/// Per pair: matches -> estimate_relative_pose -> errors. Failed estimates
/// count as infinite error. Pairs are processed with parallel_for.
EvalReport evaluate(const MatchProvider& provider, const std::vector<RenderedPair>& dataset, const EvalConfig& cfg);
EvalReport evaluate(const MatcherParams& params, const std::vector<RenderedPair>& dataset, const EvalConfig& cfg);

/// Aggregates per-pair results; medians include failures as +inf.
EvalReport summarize(std::vector<PairEval> pairs);

}  // namespace epimatch

#include "epimatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "epimatch/parallel.hpp"

namespace epimatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRadToDeg = 180.0 / M_PI;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double lo = v[n / 2 - 1], hi = v[n / 2];
  return std::isinf(hi) ? hi : 0.5 * (lo + hi);
}

nlohmann::json number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

}  // namespace

double rotation_error(const Eigen::Matrix3d& R_gt, const Eigen::Matrix3d& R_est) {
  return rotation_angle(R_gt.transpose() * R_est) * kRadToDeg;
}

double translation_error(const Eigen::Vector3d& t_gt, const Eigen::Vector3d& t_est) {
  EPIMATCH_REQUIRE(t_gt.norm() > 0.0 && t_est.norm() > 0.0, ErrorCode::kZeroTranslation,
                   "translation direction undefined for a zero vector");
  const Eigen::Vector3d a = t_gt.normalized(), b = t_est.normalized();
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b))) * kRadToDeg;
}

PoseError pose_error(const RelativePose& gt, const RelativePose& est) {
  PoseError e;
  e.rotation_deg = rotation_error(gt.R, est.R);
  e.translation_deg = translation_error(gt.t, est.t);
  e.combined = std::max(e.rotation_deg, e.translation_deg);
  return e;
}

std::vector<double> pose_auc(std::span<const double> errors, std::span<const double> thresholds) {
  EPIMATCH_REQUIRE(!errors.empty(), ErrorCode::kEmptyInput, "pose_auc needs at least one error");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> out;
  for (const double T : thresholds) {
    EPIMATCH_REQUIRE(T > 0.0, ErrorCode::kInvalidArgument, "AUC threshold must be positive");
    // recall steps up by 1/n at each sorted error; integrate the steps on [0, T].
    double area = 0.0;
    for (std::size_t k = 0; k < sorted.size() && sorted[k] < T; ++k) {
      const double next = k + 1 < sorted.size() ? std::min(sorted[k + 1], T) : T;
      area += static_cast<double>(k + 1) / n * (next - std::max(sorted[k], 0.0));
    }
    out.push_back(100.0 * area / T);
  }
  return out;
}

std::vector<double> pose_auc(std::span<const double> errors) {
  static constexpr double kThresholds[] = {5.0, 10.0, 20.0};
  return pose_auc(errors, kThresholds);
}

double matching_precision(std::span<const Correspondence> matches, const EssentialMatrix& E_gt,
                          const CameraIntrinsics& K1, const CameraIntrinsics& K2, double threshold) {
  if (matches.empty()) return 0.0;
  const FundamentalMatrix E(E_gt.m);
  std::size_t good = 0;
  for (const auto& m : matches) {
    const double d = symmetric_epipolar_distance_sq(E, normalize_point(K1, m.x1), normalize_point(K2, m.x2));
    if (d < threshold) ++good;
  }
  return 100.0 * static_cast<double>(good) / static_cast<double>(matches.size());
}

double matching_precision(std::span<const Correspondence> matches, const FundamentalMatrix& F_gt,
                          const CameraIntrinsics& K1, const CameraIntrinsics& K2, double threshold) {
  return matching_precision(matches, essential_from_fundamental(F_gt, K1, K2), K1, K2, threshold);
}

std::vector<Correspondence> predict_matches(const RenderedPair& pair, const MatcherParams& params,
                                            const MatcherConfig& cfg) {
  const MatchPrediction pred = forward(pair.image1, pair.image2, params, cfg);
  std::vector<Correspondence> out;
  out.reserve(pred.fine_matches.size());
  for (const auto& m : pred.fine_matches) out.push_back({m.x1, m.x2, m.confidence});
  return out;
}

EvalReport summarize(std::vector<PairEval> pairs) {
  EvalReport r;
  r.n_pairs = static_cast<int>(pairs.size());
  if (pairs.empty()) return r;
  std::vector<double> combined, rot, trans;
  double precision = 0.0;
  for (const auto& p : pairs) {
    combined.push_back(p.error.combined);
    rot.push_back(p.error.rotation_deg);
    trans.push_back(p.error.translation_deg);
    precision += p.precision;
    if (p.failed) ++r.n_failed;
  }
  const auto auc = pose_auc(combined);
  r.auc5 = auc[0];
  r.auc10 = auc[1];
  r.auc20 = auc[2];
  r.precision = precision / static_cast<double>(pairs.size());
  r.median_rot_deg = median(rot);
  r.median_trans_deg = median(trans);
  r.pairs = std::move(pairs);
  return r;
}

EvalReport evaluate(const MatchProvider& provider, const std::vector<RenderedPair>& dataset, const EvalConfig& cfg) {
  std::vector<PairEval> results(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), [&](int i) {
    const RenderedPair& pair = dataset[static_cast<std::size_t>(i)];
    EPIMATCH_REQUIRE(pair.F_gt.has_value(), ErrorCode::kZeroTranslation,
                     "pair " + std::to_string(i) + " has no baseline to evaluate against");
    const auto matches = provider(pair, i);
    PairEval& out = results[static_cast<std::size_t>(i)];
    out.index = i;
    out.num_matches = static_cast<int>(matches.size());
    out.precision = matching_precision(matches, *pair.F_gt, pair.cam1.intrinsics, pair.cam2.intrinsics,
                                       cfg.precision_threshold);
    RansacConfig rc = cfg.ransac;
    const double f = 0.5 * (pair.cam1.intrinsics.fx + pair.cam1.intrinsics.fy);
    rc.inlier_threshold = 2.0 * std::pow(cfg.ransac_threshold_px / f, 2);
    try {
      const PoseEstimate est = estimate_relative_pose(matches, pair.cam1.intrinsics, pair.cam2.intrinsics, rc);
      out.error = pose_error(pair.pose, est.pose);
    } catch (const Error&) {
      out.failed = true;
      out.error = {kInf, kInf, kInf};
    }
  });
  return summarize(std::move(results));
}

EvalReport evaluate(const MatcherParams& params, const std::vector<RenderedPair>& dataset, const EvalConfig& cfg) {
  return evaluate([&](const RenderedPair& pair, int) { return predict_matches(pair, params, cfg.matcher); },
                  dataset, cfg);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["auc5"] = auc5;
  j["auc10"] = auc10;
  j["auc20"] = auc20;
  j["precision"] = precision;
  j["median_rot_deg"] = number(median_rot_deg);
  j["median_trans_deg"] = number(median_trans_deg);
  j["n_pairs"] = n_pairs;
  j["n_failed"] = n_failed;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& p : pairs) {
    per.push_back({{"index", p.index},
                   {"num_matches", p.num_matches},
                   {"precision", p.precision},
                   {"rotation_deg", number(p.error.rotation_deg)},
                   {"translation_deg", number(p.error.translation_deg)},
                   {"failed", p.failed}});
  }
  j["pairs"] = per;
  return j.dump(2);
}

std::string EvalReport::to_table(const std::string& method) const {
  const int w = std::max<int>(6, static_cast<int>(method.size()));
  auto fmt = [](double x) {
    char buf[32];
    if (std::isfinite(x)) {
      std::snprintf(buf, sizeof buf, "%.2f", x);
    } else {
      std::snprintf(buf, sizeof buf, "%s", std::isnan(x) ? "nan" : "inf");
    }
    return std::string(buf);
  };
  char line[512];
  std::ostringstream s;
  std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %8s  %8s  %10s  %10s  %7s  %8s\n", w, "Method", "AUC@5",
                "AUC@10", "AUC@20", "P(%)", "med_rot", "med_trans", "pairs", "failed");
  s << line;
  std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %8s  %8s  %10s  %10s  %7d  %8d\n", w, method.c_str(),
                fmt(auc5).c_str(), fmt(auc10).c_str(), fmt(auc20).c_str(), fmt(precision).c_str(),
                fmt(median_rot_deg).c_str(), fmt(median_trans_deg).c_str(), n_pairs, n_failed);
  s << line;
  return s.str();
}

}  // namespace epimatch

#include "epimatch/pairgen.hpp"

#include <cmath>
#include <limits>

namespace epimatch {

namespace {

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;  // camera-frame z component is 1, so t is z-depth
};

Ray pixel_ray(const Camera& cam, const HomPoint2& pixel) {
  const HomPoint2 n = normalize_point(cam.intrinsics, pixel.normalized());
  return {cam.centre(), cam.pose.R.transpose() * Eigen::Vector3d(n.u, n.v, 1.0)};
}

std::optional<double> hemisphere_depth(const HemisphereModel& m, const Ray& ray) {
  double best = std::numeric_limits<double>::infinity();
  if (ray.dir.z() < 0.0) {
    const double t = (m.z_plane - ray.origin.z()) / ray.dir.z();
    if (t > 0.0) best = t;
  }
  const Eigen::Vector3d centre(ray.origin.x(), ray.origin.y(), m.z_plane);
  const Eigen::Vector3d oc = ray.origin - centre;
  const double a = ray.dir.squaredNorm();
  const double b = oc.dot(ray.dir);
  const double c = oc.squaredNorm() - m.r_sphere * m.r_sphere;
  const double disc = b * b - a * c;
  if (disc >= 0.0) {
    const double t = (-b + std::sqrt(disc)) / a;
    if (t > 0.0 && ray.origin.z() + t * ray.dir.z() >= m.z_plane) best = std::min(best, t);
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

std::optional<double> box_depth(const BoxModel& m, const Ray& ray) {
  Eigen::Vector3d fwd(m.driving_dir.x(), m.driving_dir.y(), 0.0);
  if (fwd.norm() < 1e-12) fwd = Eigen::Vector3d::UnitX();
  fwd.normalize();
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d lat = up.cross(fwd);
  double best = std::numeric_limits<double>::infinity();
  bool end_wall = false;
  auto consider = [&](const Eigen::Vector3d& axis, double offset, bool is_end) {
    const double rate = axis.dot(ray.dir);
    if (std::abs(rate) < 1e-15) return;
    const double t = offset / rate;
    if (t > 0.0 && t < best) {
      best = t;
      end_wall = is_end;
    }
  };
  consider(lat, m.side, false);
  consider(lat, -m.side, false);
  consider(up, m.bottom, false);
  consider(fwd, m.longitudinal, true);
  consider(fwd, -m.longitudinal, true);
  if (!std::isfinite(best) || end_wall) return std::nullopt;
  return best;
}

}  // namespace

void OverlapRange::validate() const {
  EPIMATCH_REQUIRE(min >= 0.0 && max <= 1.0 && min < max, ErrorCode::kInvalidArgument,
                   "overlap range must satisfy 0 <= min < max <= 1");
}

PseudoDepthModel model_preset(const std::string& name) {
  if (name == "euroc-machine") return HemisphereModel{-2.0, 10.0};
  if (name == "euroc-room") return HemisphereModel{0.0, 3.0};
  if (name == "sf-street") return BoxModel{10.0, -2.0, 25.0, Eigen::Vector3d::UnitX()};
  throw Error(ErrorCode::kInvalidArgument,
              "unknown model preset '" + name + "' (expected euroc-machine, euroc-room or sf-street)");
}

Eigen::Vector2d implied_image_size(const CameraIntrinsics& K) { return {2.0 * K.cx, 2.0 * K.cy}; }

std::optional<double> pseudo_depth(const PseudoDepthModel& model, const Camera& camera, const HomPoint2& pixel) {
  const Ray ray = pixel_ray(camera, pixel);
  if (const auto* h = std::get_if<HemisphereModel>(&model)) return hemisphere_depth(*h, ray);
  return box_depth(std::get<BoxModel>(model), ray);
}

double pseudo_overlap(const PseudoDepthModel& model_i, const Camera& cam_i, const Camera& cam_j, int samples) {
  EPIMATCH_REQUIRE(samples >= 1, ErrorCode::kInvalidArgument, "need at least one sample per side");
  const Eigen::Vector2d size_i = implied_image_size(cam_i.intrinsics);
  const Eigen::Vector2d size_j = implied_image_size(cam_j.intrinsics);
  int hits = 0;
  for (int b = 0; b < samples; ++b) {
    for (int a = 0; a < samples; ++a) {
      const HomPoint2 px((a + 0.5) * size_i.x() / samples, (b + 0.5) * size_i.y() / samples);
      const auto depth = pseudo_depth(model_i, cam_i, px);
      if (!depth) continue;
      const Ray ray = pixel_ray(cam_i, px);
      const Eigen::Vector3d X = ray.origin + *depth * ray.dir;
      const Eigen::Vector3d Xj = cam_j.pose.R * X + cam_j.pose.t;
      if (Xj.z() <= 0.0) continue;
      const double u = cam_j.intrinsics.fx * Xj.x() / Xj.z() + cam_j.intrinsics.cx;
      const double v = cam_j.intrinsics.fy * Xj.y() / Xj.z() + cam_j.intrinsics.cy;
      if (u >= 0.0 && u < size_j.x() && v >= 0.0 && v < size_j.y()) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(samples * samples);
}

std::vector<PseudoDepthModel> instantiate_models(const PseudoDepthModel& model,
                                                 const std::vector<PoseRecord>& poses) {
  std::vector<PseudoDepthModel> out(poses.size(), model);
  const auto* box = std::get_if<BoxModel>(&model);
  if (box == nullptr) return out;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const std::size_t prev = k > 0 ? k - 1 : k;
    const std::size_t next = k + 1 < poses.size() ? k + 1 : k;
    Eigen::Vector3d dir = poses[next].camera.centre() - poses[prev].camera.centre();
    dir.z() = 0.0;
    if (dir.norm() < 1e-9) {
      // Lone pose or standing still: fall back to the horizontal viewing direction.
      dir = poses[k].camera.pose.R.row(2).transpose();
      dir.z() = 0.0;
    }
    BoxModel b = *box;
    b.driving_dir = dir.norm() > 1e-12 ? Eigen::Vector3d(dir.normalized()) : Eigen::Vector3d::UnitX();
    out[k] = b;
  }
  return out;
}

std::vector<PairCandidate> generate_pairs(const std::vector<PoseRecord>& poses, const PseudoDepthModel& model,
                                          const OverlapRange& range, const PairgenOptions& options) {
  range.validate();
  EPIMATCH_REQUIRE(options.stride >= 1, ErrorCode::kInvalidArgument, "stride must be >= 1");
  const auto models = instantiate_models(model, poses);
  std::vector<PairCandidate> out;
  const int n = static_cast<int>(poses.size());
  for (int i = 0; i < n; i += options.stride) {
    for (int j = i + options.stride; j < n; j += options.stride) {
      const auto& ci = poses[static_cast<std::size_t>(i)].camera;
      const auto& cj = poses[static_cast<std::size_t>(j)].camera;
      const double ij = pseudo_overlap(models[static_cast<std::size_t>(i)], ci, cj, options.samples);
      const double ji = pseudo_overlap(models[static_cast<std::size_t>(j)], cj, ci, options.samples);
      const double score = std::min(ij, ji);
      if (score >= range.min && score <= range.max) out.push_back({i, j, score});
    }
  }
  return out;
}

}  // namespace epimatch

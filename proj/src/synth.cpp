#include "epimatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "epimatch/seed.hpp"

namespace epimatch {

namespace {

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x8da6b343ULL +
                                                       static_cast<std::uint64_t>(iy) * 0xd8163841ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double sx = quintic(x - fx), sy = quintic(y - fy);
  const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
  return (a + (b - a) * sx) + ((c + (d - c) * sx) - (a + (b - a) * sx)) * sy;
}

// Per-plane texture transform drawn from the plane's texture seed.
struct PlaneTexture {
  double cos_a, sin_a, off_u, off_v;
  std::uint64_t seed;
};

PlaneTexture plane_texture(const TexturedPlane& p) {
  std::mt19937_64 rng(p.texture_seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI), off(0.0, 100.0);
  const double a = angle(rng);
  return {std::cos(a), std::sin(a), off(rng), off(rng), splitmix64(p.texture_seed)};
}

double texture_value(const TextureSpec& spec, const PlaneTexture& tex, double s, double t) {
  const double u = tex.cos_a * s - tex.sin_a * t + tex.off_u;
  const double v = tex.sin_a * s + tex.cos_a * t + tex.off_v;
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = spec.base_frequency;
  for (int k = 0; k < spec.octaves; ++k) {
    sum += amp * value_noise(u * freq, v * freq, tex.seed + static_cast<std::uint64_t>(k));
    norm += amp;
    amp *= spec.persistence;
    freq *= 2.0;
  }
  return sum / norm;
}

struct Hit {
  double depth = std::numeric_limits<double>::infinity();  // ray parameter for a z = 1 direction
  int plane = -1;
  double s = 0.0, t = 0.0;
};

// Nearest intersection of C + lambda * d (d from K^-1 x, so lambda is z-depth
// in the camera frame) with any plane rectangle.
Hit cast(const std::vector<TexturedPlane>& planes, const Eigen::Vector3d& C, const Eigen::Vector3d& d) {
  Hit best;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const TexturedPlane& p = planes[k];
    const Eigen::Vector3d n = p.normal();
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-12) continue;
    const double lambda = n.dot(p.origin - C) / denom;
    if (!(lambda > 1e-9) || lambda >= best.depth) continue;
    const Eigen::Vector3d q = C + lambda * d - p.origin;
    const double s = q.dot(p.axis_u), t = q.dot(p.axis_v);
    if (s < 0.0 || s > p.len_u || t < 0.0 || t > p.len_v) continue;
    best = {lambda, static_cast<int>(k), s, t};
  }
  return best;
}

struct View {
  Image image;
  Image depth;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> surface;
};

View render_view(const SceneSpec& spec, const std::vector<TexturedPlane>& planes,
                 const std::vector<PlaneTexture>& textures, const Camera& cam, std::uint64_t noise_seed) {
  const int H = spec.height, W = spec.width;
  const Eigen::Matrix3d Rt = cam.pose.R.transpose();
  const Eigen::Vector3d C = cam.centre();
  const CameraIntrinsics& K = cam.intrinsics;
  auto ray = [&](double u, double v) {
    return Eigen::Vector3d(Rt * Eigen::Vector3d((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0));
  };
  auto shade = [&](const Hit& h) {
    if (h.plane < 0) return 0.0;
    const auto& p = planes[static_cast<std::size_t>(h.plane)];
    return 0.5 + p.brightness +
           spec.texture.contrast * texture_value(spec.texture, textures[static_cast<std::size_t>(h.plane)], h.s, h.t);
  };

  View v;
  v.image.resize(H, W);
  v.depth.resize(H, W);
  v.surface.resize(H, W);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const Hit centre = cast(planes, C, ray(c + 0.5, r + 0.5));
      v.depth(r, c) = centre.plane >= 0 ? centre.depth : 0.0;
      v.surface(r, c) = centre.plane;
      double sum = 0.0;
      for (double dy : {0.25, 0.75}) {
        for (double dx : {0.25, 0.75}) sum += shade(cast(planes, C, ray(c + dx, r + dy)));
      }
      v.image(r, c) = sum / 4.0;
    }
  }
  if (spec.noise_sigma > 0.0) {
    for (Eigen::Index k = 0; k < v.image.size(); ++k) v.image.data()[k] += spec.noise_sigma * noise(rng);
  }
  // Quantized to float32 so a pair read back from disk equals the one rendered.
  v.image = v.image.cwiseMax(0.0).cwiseMin(1.0).cast<float>().cast<double>();
  return v;
}

void add_box_room(const RoomSpec& room, std::vector<TexturedPlane>& out) {
  const double w = 2.0 * room.half_width, h = room.floor - room.ceiling, d = room.back - room.front;
  const Eigen::Vector3d X = Eigen::Vector3d::UnitX(), Y = Eigen::Vector3d::UnitY(), Z = Eigen::Vector3d::UnitZ();
  const double x0 = -room.half_width;
  out.push_back({{x0, room.ceiling, room.back}, X, Y, w, h});
  out.push_back({{x0, room.ceiling, room.front}, X, Y, w, h});
  out.push_back({{x0, room.ceiling, room.front}, Z, Y, d, h});
  out.push_back({{room.half_width, room.ceiling, room.front}, Z, Y, d, h});
  out.push_back({{x0, room.floor, room.front}, X, Z, w, d});
  out.push_back({{x0, room.ceiling, room.front}, X, Z, w, d});
}

void add_crate(const Eigen::Vector3d& corner, double yaw, const Eigen::Vector3d& size,
               std::vector<TexturedPlane>& out) {
  const Eigen::Vector3d ex(std::cos(yaw), 0.0, std::sin(yaw));
  const Eigen::Vector3d ez(-std::sin(yaw), 0.0, std::cos(yaw));
  const Eigen::Vector3d up = -Eigen::Vector3d::UnitY();
  const Eigen::Vector3d top = corner + size.y() * up;  // y points down
  const Eigen::Vector3d Y = Eigen::Vector3d::UnitY();
  out.push_back({top, ex, ez, size.x(), size.z()});
  out.push_back({top, ex, Y, size.x(), size.y()});
  out.push_back({top + size.z() * ez, ex, Y, size.x(), size.y()});
  out.push_back({top, ez, Y, size.z(), size.y()});
  out.push_back({top + size.x() * ex, ez, Y, size.z(), size.y()});
}

// World-to-camera pose looking from C towards target, rolled about the axis.
RelativePose look_at(const Eigen::Vector3d& C, const Eigen::Vector3d& target, double roll) {
  const Eigen::Vector3d z = (target - C).normalized();
  Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d R;
  R.row(0) = x;
  R.row(1) = y;
  R.row(2) = z;
  R = rotation_from_axis_angle(Eigen::Vector3d::UnitZ(), roll) * R;
  return {R, -R * C};
}

bool inside_room(const RoomSpec& room, const Eigen::Vector3d& C, double margin) {
  return std::abs(C.x()) < room.half_width - margin && C.y() > room.ceiling + margin &&
         C.y() < room.floor - margin && C.z() > room.front + margin && C.z() < room.back - margin;
}

// Bilinear inverse depth at a continuous pixel coordinate when the four
// surrounding pixel centres see the same plane (exact on a plane).
std::optional<double> planar_depth(const Image& depth,
                                   const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& surface,
                                   double u, double v) {
  const double x = u - 0.5, y = v - 0.5;
  const int c0 = static_cast<int>(std::floor(x)), r0 = static_cast<int>(std::floor(y));
  if (c0 < 0 || r0 < 0 || c0 + 1 >= depth.cols() || r0 + 1 >= depth.rows()) return std::nullopt;
  const int s = surface(r0, c0);
  if (s < 0 || surface(r0, c0 + 1) != s || surface(r0 + 1, c0) != s || surface(r0 + 1, c0 + 1) != s) {
    return std::nullopt;
  }
  const double ax = x - c0, ay = y - r0;
  const double q = (1 - ax) * (1 - ay) / depth(r0, c0) + ax * (1 - ay) / depth(r0, c0 + 1) +
                   (1 - ax) * ay / depth(r0 + 1, c0) + ax * ay / depth(r0 + 1, c0 + 1);
  return 1.0 / q;
}

}  // namespace

void SceneSpec::validate() const {
  EPIMATCH_REQUIRE(width > 0 && height > 0 && focal > 0.0, ErrorCode::kInvalidArgument,
                   "image size and focal length must be positive");
  EPIMATCH_REQUIRE(noise_sigma >= 0.0, ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  EPIMATCH_REQUIRE(texture.octaves >= 1 && texture.base_frequency > 0.0, ErrorCode::kInvalidArgument,
                   "texture needs at least one octave");
  const auto& p = pose_sampler;
  EPIMATCH_REQUIRE(p.rotation_min_deg >= 0.0 && p.rotation_min_deg <= p.rotation_max_deg,
                   ErrorCode::kInvalidArgument, "rotation range is empty");
  EPIMATCH_REQUIRE(p.baseline_min > 1e-8 * scene_scale && p.baseline_min <= p.baseline_max,
                   ErrorCode::kInvalidArgument, "baseline range must exceed the degeneracy threshold");
  EPIMATCH_REQUIRE(p.distance_min > 0.0 && p.distance_min <= p.distance_max, ErrorCode::kInvalidArgument,
                   "distance range is empty");
  EPIMATCH_REQUIRE(use_room || !extra_planes.empty(), ErrorCode::kInvalidArgument, "scene has no geometry");
  EPIMATCH_REQUIRE(room.crates_min >= 0 && room.crates_min <= room.crates_max, ErrorCode::kInvalidArgument,
                   "crate count range is empty");
}

std::vector<TexturedPlane> scene_planes(const SceneSpec& spec, int index) {
  std::vector<TexturedPlane> planes;
  std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index), 10));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (spec.use_room) {
    const RoomSpec& room = spec.room;
    add_box_room(room, planes);
    const int crates = room.crates_min +
                       static_cast<int>(std::floor(unit(rng) * (room.crates_max - room.crates_min + 1)));
    for (int k = 0; k < std::min(crates, room.crates_max); ++k) {
      const Eigen::Vector3d size{room.crate_size_min + unit(rng) * (room.crate_size_max - room.crate_size_min),
                                 room.crate_size_min + unit(rng) * (room.crate_size_max - room.crate_size_min),
                                 room.crate_size_min + unit(rng) * (room.crate_size_max - room.crate_size_min)};
      const double x = -room.half_width + 0.3 + unit(rng) * (2.0 * room.half_width - 0.6 - size.x());
      const double z = 1.0 + unit(rng) * std::max(0.0, room.back - 1.3 - size.z() - 1.0);
      add_crate({x, room.floor, z}, unit(rng) * M_PI / 2.0, size, planes);
    }
    for (auto& p : planes) {
      p.brightness = spec.texture.brightness_jitter * (2.0 * unit(rng) - 1.0);
      p.texture_seed = rng();
    }
  }
  for (const auto& p : spec.extra_planes) planes.push_back(p);
  return planes;
}

RenderedPair render_pair(const SceneSpec& spec, int index, const Camera& cam1, const Camera& cam2) {
  spec.validate();
  const auto planes = scene_planes(spec, index);
  std::vector<PlaneTexture> textures;
  for (const auto& p : planes) textures.push_back(plane_texture(p));
  const auto idx = static_cast<std::uint64_t>(index);
  View v1 = render_view(spec, planes, textures, cam1, derive_seed(spec.seed, idx, 1));
  View v2 = render_view(spec, planes, textures, cam2, derive_seed(spec.seed, idx, 2));
  RenderedPair out;
  out.image1 = std::move(v1.image);
  out.image2 = std::move(v2.image);
  out.depth1 = std::move(v1.depth);
  out.depth2 = std::move(v2.depth);
  out.surface1 = std::move(v1.surface);
  out.surface2 = std::move(v2.surface);
  out.K = cam1.intrinsics;
  out.cam1 = cam1;
  out.cam2 = cam2;
  out.pose = RelativePose::between(cam1.pose, cam2.pose);
  if (out.pose.t.norm() > 1e-8 * spec.scene_scale) {
    out.F_gt = fundamental_from_pose(cam1.intrinsics, cam2.intrinsics, out.pose, spec.scene_scale);
  }
  return out;
}

RenderedPair sample_pair(const SceneSpec& spec, int index) {
  spec.validate();
  const auto& ps = spec.pose_sampler;
  const RoomSpec& room = spec.room;
  std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index), 20));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double deg = M_PI / 180.0;
  const CameraIntrinsics K = spec.intrinsics();
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    const Eigen::Vector3d target{room.half_width * 0.6 * (2.0 * unit(rng) - 1.0),
                                 room.ceiling + 0.5 + unit(rng) * (room.floor - room.ceiling - 0.7),
                                 room.back - 0.3 - unit(rng) * 2.5};
    const double dist = ps.distance_min + unit(rng) * (ps.distance_max - ps.distance_min);
    const Eigen::Vector3d view_dir =
        Eigen::Vector3d{0.35 * normal(rng), 0.15 * normal(rng), 1.0}.normalized();
    const Eigen::Vector3d C1 = target - dist * view_dir;
    Eigen::Vector3d step{normal(rng), 0.3 * normal(rng), 0.3 * normal(rng)};
    step = step.normalized() * (ps.baseline_min + unit(rng) * (ps.baseline_max - ps.baseline_min));
    const Eigen::Vector3d C2 = C1 + step;
    if (!inside_room(room, C1, 0.2) || !inside_room(room, C2, 0.2)) continue;
    if (C1.z() > 0.8 || C2.z() > 0.8) continue;  // stay in front of the crates

    auto jitter = [&]() -> Eigen::Vector3d {
      return Eigen::Vector3d{normal(rng), normal(rng), normal(rng)} * (ps.look_at_jitter_deg * deg * dist / 1.7);
    };
    Camera cam1{K, look_at(C1, target + jitter(), ps.roll_max_deg * deg * (2.0 * unit(rng) - 1.0))};
    Camera cam2{K, look_at(C2, target + jitter(), ps.roll_max_deg * deg * (2.0 * unit(rng) - 1.0))};
    const RelativePose rel = RelativePose::between(cam1.pose, cam2.pose);
    const double angle = rotation_angle(rel.R) / deg;
    if (angle < ps.rotation_min_deg || angle > ps.rotation_max_deg) continue;
    if (rel.t.norm() <= 1e-8 * spec.scene_scale) continue;
    return render_pair(spec, index, cam1, cam2);
  }
  throw Error(ErrorCode::kDegeneratePose,
              "no valid pose for pair " + std::to_string(index) + " after " + std::to_string(spec.max_retries) +
                  " draws");
}

std::vector<std::optional<GtTarget>> gt_correspondence_grid(const RenderedPair& pair, const GridSpec& grid) {
  grid.validate();
  std::vector<std::optional<GtTarget>> out(static_cast<std::size_t>(grid.size()));
  const CameraIntrinsics& K1 = pair.cam1.intrinsics;
  const CameraIntrinsics& K2 = pair.cam2.intrinsics;
  const double W2 = static_cast<double>(pair.image2.cols()), H2 = static_cast<double>(pair.image2.rows());
  for (int i = 0; i < grid.size(); ++i) {
    const HomPoint2 x = grid.centre(i);
    const auto z1 = planar_depth(pair.depth1, pair.surface1, x.u, x.v);
    if (!z1) continue;
    const Eigen::Vector3d X1 = *z1 * normalize_point(K1, x).vec();
    const Eigen::Vector3d X2 = pair.pose.R * X1 + pair.pose.t;
    if (X2.z() <= 0.0) continue;
    const double u = K2.fx * X2.x() / X2.z() + K2.cx;
    const double v = K2.fy * X2.y() / X2.z() + K2.cy;
    if (!(u >= 0.0 && u < W2 && v >= 0.0 && v < H2)) continue;

    // Two-sided 1% depth test against what camera 2 actually sees.
    bool visible = false;
    if (const auto z2 = planar_depth(pair.depth2, pair.surface2, u, v)) {
      visible = std::abs(X2.z() - *z2) <= 0.01 * *z2;
    } else {
      const int c0 = std::clamp(static_cast<int>(std::floor(u - 0.5)), 0, static_cast<int>(W2) - 1);
      const int r0 = std::clamp(static_cast<int>(std::floor(v - 0.5)), 0, static_cast<int>(H2) - 1);
      for (int dr = 0; dr <= 1 && !visible; ++dr) {
        for (int dc = 0; dc <= 1 && !visible; ++dc) {
          const int r = std::min(r0 + dr, static_cast<int>(H2) - 1);
          const int c = std::min(c0 + dc, static_cast<int>(W2) - 1);
          const double z2 = pair.depth2(r, c);
          visible = z2 > 0.0 && std::abs(X2.z() - z2) <= 0.01 * z2;
        }
      }
    }
    if (!visible) continue;
    const auto cell = grid.cell_of(u, v);
    if (!cell) continue;
    out[static_cast<std::size_t>(i)] = GtTarget{*cell, {u, v, 1.0}};
  }
  return out;
}

SceneSpec make_domain(const std::string& name, std::uint64_t seed) {
  SceneSpec s;
  s.name = name;
  s.seed = seed;
  s.focal = 250.0;
  if (name == "A") {
    s.texture = {4, 3.0, 0.7, 0.45, 0.12};
    s.pose_sampler = {0.0, 10.0, 0.1, 0.5, 2.0, 3.0, 2.5, 4.5};
    s.noise_sigma = 0.005;
  } else if (name == "B") {
    s.texture = {4, 1.5, 0.5, 0.3, 0.03};
    s.pose_sampler = {5.0, 35.0, 0.6, 2.0, 5.0, 8.0, 2.5, 4.5};
    s.noise_sigma = 0.01;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown domain '" + name + "' (expected A or B)");
  }
  return s;
}

}  // namespace epimatch

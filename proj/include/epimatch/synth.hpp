#pragma once

// Deterministic two-view renderer for textured piecewise-planar rooms.
//
// World frame: x right, y down, z forward (into the room). Depth maps hold
// z-depth in the camera frame, sampled at pixel centres.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epimatch/geometry.hpp"
#include "epimatch/image.hpp"
#include "epimatch/losses.hpp"

namespace epimatch {

// Rectangle origin + s * axis_u + t * axis_v for s in [0, len_u], t in [0, len_v];
// axis_u and axis_v are orthonormal.
struct TexturedPlane {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double len_u = 1.0;
  double len_v = 1.0;
  double brightness = 0.0;       // added to the texture mean of 0.5
  std::uint64_t texture_seed = 0;

  Eigen::Vector3d normal() const { return axis_u.cross(axis_v); }
};

// Fractal value noise: octave k has frequency base_frequency * 2^k (cycles per
// metre) and amplitude persistence^k, scaled by contrast.
struct TextureSpec {
  int octaves = 4;
  double base_frequency = 2.0;
  double persistence = 0.5;
  double contrast = 0.3;
  double brightness_jitter = 0.1;  // per-plane offset range
};

struct PoseSamplerSpec {
  double rotation_min_deg = 0.0;
  double rotation_max_deg = 10.0;
  double baseline_min = 0.1;  // metres
  double baseline_max = 0.5;
  double look_at_jitter_deg = 3.0;
  double roll_max_deg = 3.0;
  double distance_min = 2.5;  // camera 1 to the look-at target
  double distance_max = 4.5;
};

struct RoomSpec {
  double half_width = 3.0;
  double ceiling = -2.0;   // y of the ceiling (y points down)
  double floor = 1.5;
  double back = 6.0;       // z of the back wall
  double front = -3.0;     // z of the wall behind the cameras
  int crates_min = 2;
  int crates_max = 4;
  double crate_size_min = 0.4;
  double crate_size_max = 1.2;
};

struct SceneSpec {
  std::string name;
  RoomSpec room;
  // Extra planes appended to every scene. With room.crates_max == 0 and
  // use_room == false these are the whole geometry.
  std::vector<TexturedPlane> extra_planes;
  bool use_room = true;
  TextureSpec texture;
  PoseSamplerSpec pose_sampler;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
  double focal = 100.0;
  int max_retries = 50;
  double scene_scale = 1.0;

  CameraIntrinsics intrinsics() const { return {focal, focal, width / 2.0, height / 2.0}; }
  void validate() const;
};

struct RenderedPair {
  Image image1, image2;
  Image depth1, depth2;  // z-depth, 0 where no surface was hit
  // Index of the plane seen at each pixel centre, -1 for none.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> surface1, surface2;
  CameraIntrinsics K;
  Camera cam1, cam2;          // absolute, world-to-camera
  RelativePose pose;          // camera 1 -> camera 2
  std::optional<FundamentalMatrix> F_gt;  // unset for a pure rotation
};

/// Planes of the scene drawn for (spec.seed, index).
std::vector<TexturedPlane> scene_planes(const SceneSpec& spec, int index);

/// Renders both views of the scene for (spec.seed, index) from the given
/// cameras. Noise is seeded by (spec.seed, index).
RenderedPair render_pair(const SceneSpec& spec, int index, const Camera& cam1, const Camera& cam2);

/// Draws cameras from the pose sampler (retrying degenerate draws) and renders.
RenderedPair sample_pair(const SceneSpec& spec, int index);

struct GtTarget {
  int cell = 0;
  HomPoint2 point;  // subpixel location in image 2
};

/// Ground-truth image-2 target for every coarse cell centre of image 1, or
/// nullopt when the centre has no reliable depth, leaves view 2 or is occluded.
std::vector<std::optional<GtTarget>> gt_correspondence_grid(const RenderedPair& pair, const GridSpec& grid);

/// "A" or "B"; anything else raises InvalidArgument.
SceneSpec make_domain(const std::string& name, std::uint64_t seed = 0);

}  // namespace epimatch

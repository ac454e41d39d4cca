#pragma once

// Pose-only pair mining. Every camera is assumed to sit inside a simple
// surface (a hemisphere or a street-aligned box); pseudo-overlap is the share
// of a sample grid of one image whose pseudo-depth point lands in the other.
//
// World frame for these models: z points up.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "epimatch/geometry.hpp"

namespace epimatch {

struct PoseRecord {
  std::string id;
  Camera camera;  // world-to-camera
  std::optional<double> timestamp;
};

// Horizontal plane at z_plane plus a dome of radius r_sphere centred at
// (x_camera, y_camera, z_plane).
struct HemisphereModel {
  double z_plane = 0.0;
  double r_sphere = 3.0;
};

// Box around the camera aligned with the driving direction: side walls at
// +-side, floor `bottom` metres relative to the camera (negative is below),
// front/back walls at +-longitudinal, no top.
struct BoxModel {
  double side = 10.0;
  double bottom = -2.0;
  double longitudinal = 25.0;
  Eigen::Vector3d driving_dir = Eigen::Vector3d::UnitX();
};

using PseudoDepthModel = std::variant<HemisphereModel, BoxModel>;

struct OverlapRange {
  double min = 0.3;
  double max = 0.8;
  void validate() const;
};

struct PairgenOptions {
  int samples = 32;   // per image side
  int stride = 1;     // consider every stride-th pose
};

/// Named presets: "euroc-machine", "euroc-room" (hemisphere) and "sf-street" (box).
PseudoDepthModel model_preset(const std::string& name);

/// Image size implied by the intrinsics: (2 cx, 2 cy).
Eigen::Vector2d implied_image_size(const CameraIntrinsics& K);

/// z-depth of the first model surface hit by the ray through pixel, or nullopt
/// (box front/back walls, or no hit).
std::optional<double> pseudo_depth(const PseudoDepthModel& model, const Camera& camera, const HomPoint2& pixel);

/// Fraction of the samples x samples grid of image i whose pseudo-depth point
/// projects inside image j and in front of camera j. `model_i` is the model
/// instance for camera i.
double pseudo_overlap(const PseudoDepthModel& model_i, const Camera& cam_i, const Camera& cam_j,
                      int samples = 32);

/// Per-pose model instances; box models get their driving direction from the
/// neighbouring poses.
std::vector<PseudoDepthModel> instantiate_models(const PseudoDepthModel& model,
                                                 const std::vector<PoseRecord>& poses);

struct PairCandidate {
  int i = 0;
  int j = 0;
  double overlap = 0.0;  // min of both directions
};

std::vector<PairCandidate> generate_pairs(const std::vector<PoseRecord>& poses, const PseudoDepthModel& model,
                                          const OverlapRange& range, const PairgenOptions& options = {});

}  // namespace epimatch

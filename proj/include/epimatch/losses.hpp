#pragma once

// Supervision signals for the two-stage matcher: ground-truth correspondence
// losses, the epipolar classification mask and regression distance, and their
// combination. All gradients are analytic.

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "epimatch/geometry.hpp"

namespace epimatch {

struct GridSpec {
  int rows = 0;
  int cols = 0;
  int w = 8;  // pixels per coarse cell

  int size() const { return rows * cols; }
  // Continuous pixel coordinate of the centre of cell idx (row-major).
  HomPoint2 centre(int idx) const;
  // Cell containing a pixel coordinate, or nullopt outside the grid.
  std::optional<int> cell_of(double u, double v) const;
  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

struct ConfidenceMatrix {
  Eigen::MatrixXd values;  // grid1.size() x grid2.size(), entries in [0, 1]
  GridSpec grid1;
  GridSpec grid2;
};

// Positive entries of an m x m binary mask, stored row by row.
struct EpipolarMask {
  std::vector<std::vector<int>> positives;
  std::vector<std::vector<int>> line_sets;  // empty for ground-truth masks
  std::vector<bool> excluded;

  int rows() const { return static_cast<int>(positives.size()); }
  std::size_t num_positives() const;
  Eigen::MatrixXd dense(int cols) const;
};

struct LossConfig {
  double lambda = 0.5;
  double theta = std::sqrt(2.0);
  double fine_weight_scale = 1.0;
  double fine_supervision_fraction = 0.3;
  bool naive_mask = false;

  void validate() const;
};

// A fine-level prediction: x1 is fixed (a cell centre in image 1), x2 is the
// refined estimate in image 2. Both are pixel coordinates with w = 1.
struct FineMatch {
  HomPoint2 x1;
  HomPoint2 x2;
  double confidence = 1.0;
  int cell1 = -1;
  int cell2 = -1;
};

using LineSets = std::vector<std::vector<int>>;

/// Cells of grid2 whose centres lie within theta * w / 2 pixels of F x_i for
/// every cell centre x_i of grid1. Rows whose line is undefined are empty.
LineSets epipolar_line_set(const FundamentalMatrix& F, const GridSpec& grid1, const GridSpec& grid2,
                           double theta);

/// One positive per row at the highest-confidence cell on the line
/// (lowest column wins ties).
EpipolarMask epipolar_classification_mask(const ConfidenceMatrix& C, const LineSets& line_sets);

/// Every cell on the line is positive.
EpipolarMask naive_epipolar_mask(const LineSets& line_sets);

EpipolarMask gt_classification_mask(std::span<const std::optional<int>> gt_cells);

struct CoarseLoss {
  double value = 0.0;
  Eigen::MatrixXd grad;  // dL/dC, same shape as C
};

/// Mean of -log C_ij over the positive entries, C clamped to [1e-12, 1 - 1e-12].
CoarseLoss coarse_loss(const ConfidenceMatrix& C, const EpipolarMask& mask);

struct DistanceGrad {
  double value = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();  // w.r.t. (u, v) of x2
};

/// Perpendicular pixel distance from x2_hat to the line F x1.
DistanceGrad d_epi(const FundamentalMatrix& F, const HomPoint2& x1, const HomPoint2& x2_hat);

struct FineLoss {
  double value = 0.0;
  std::vector<Eigen::Vector2d> grad;  // per match, w.r.t. x2
};

FineLoss fine_loss(const FundamentalMatrix& F, std::span<const FineMatch> matches, double scale = 1.0);

/// Mean Euclidean distance to the ground-truth targets, times scale.
FineLoss gt_fine_loss(std::span<const FineMatch> matches, std::span<const HomPoint2> targets,
                      double scale = 1.0);

struct TotalLoss {
  double value = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
  Eigen::MatrixXd dC;
  std::vector<Eigen::Vector2d> dfine;
  EpipolarMask mask;
};

/// (1 - lambda) * coarse + lambda * fine. The argmax mask is rebuilt from C but
/// not differentiated through. Fine matches may be empty when lambda == 0 and
/// C may be empty when lambda == 1.
TotalLoss total_epipolar_loss(const ConfidenceMatrix& C, std::span<const FineMatch> fine_matches,
                              const FundamentalMatrix& F, const LossConfig& cfg);

/// Combine already-computed coarse and fine parts with the lambda weighting.
TotalLoss combine_losses(const CoarseLoss* coarse, const FineLoss* fine, double lambda);

}  // namespace epimatch

#pragma once

// A small coarse-to-fine matcher: linear patch embeddings, a dual-softmax
// confidence matrix over coarse cells and soft-argmax refinement inside a
// window of fine descriptors. Forward and backward are both analytic.

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "epimatch/image.hpp"
#include "epimatch/losses.hpp"

namespace epimatch {

struct MatcherConfig {
  int w = 8;             // coarse cell width
  int fine_stride = 2;   // fine grid spacing in pixels
  int fine_patch = 8;    // fine patch width
  int d = 32;            // coarse embedding size
  int d_f = 16;          // fine embedding size
  int window_radius = 3; // in fine-grid steps
  double tau = 0.1;
  double tau_min = 0.01;
  double match_threshold = 0.2;

  int coarse_dim() const { return w * w; }
  int fine_dim() const { return fine_patch * fine_patch; }
  void validate() const;
};

struct MatcherParams {
  Eigen::MatrixXd W_coarse;  // coarse_dim x d
  Eigen::MatrixXd W_fine;    // fine_dim x d_f
  double tau = 0.1;

  /// Seeded Gaussian initialization with unit expected column norm.
  static MatcherParams init(const MatcherConfig& cfg, std::uint64_t seed);
  void validate(const MatcherConfig& cfg) const;
  bool operator==(const MatcherParams& o) const {
    return W_coarse == o.W_coarse && W_fine == o.W_fine && tau == o.tau;
  }
};

struct MatcherGrads {
  Eigen::MatrixXd W_coarse;
  Eigen::MatrixXd W_fine;
  double tau = 0.0;

  static MatcherGrads zeros_like(const MatcherParams& p);
  MatcherGrads& operator+=(const MatcherGrads& o);
  MatcherGrads& operator*=(double s);
  bool all_finite() const;
};

// Positions of the fine grid: index (b, a) sits at pixel (stride * a, stride * b)
// with a in [lo, hi_u] and b in [lo, hi_v], so every patch lies inside the image.
struct FineGrid {
  int stride = 2;
  int lo = 0;
  int hi_u = -1;
  int hi_v = -1;

  int cols() const { return hi_u - lo + 1; }
  int rows() const { return hi_v - lo + 1; }
  int index(int a, int b) const { return (b - lo) * cols() + (a - lo); }
};

// Raw (not embedded) per-patch features of a single image.
struct ImageFeatures {
  GridSpec grid;
  Eigen::MatrixXd coarse;         // m x coarse_dim, rows mean-free and unit-norm
  std::vector<bool> textureless;  // per coarse cell
  FineGrid fine_grid;
  Eigen::MatrixXd fine;           // fine positions x fine_dim
};

struct FeatureGrids {
  ImageFeatures f1;
  ImageFeatures f2;
};

/// Throws BadDimensions unless both sides are positive multiples of cfg.w.
ImageFeatures extract_image_features(const Image& image, const MatcherConfig& cfg);
FeatureGrids extract_features(const Image& image1, const Image& image2, const MatcherConfig& cfg);

// Forward intermediates of the coarse stage.
struct CoarseForward {
  ConfidenceMatrix C;
  Eigen::MatrixXd P1, P2;  // embeddings before normalization
  Eigen::MatrixXd D1, D2;  // normalized descriptors
  Eigen::VectorXd n1, n2;  // embedding norms (0 for zeroed rows)
  Eigen::MatrixXd S;       // similarities / tau
  Eigen::MatrixXd A, B;    // row- and column-softmax factors
};

CoarseForward coarse_forward(const FeatureGrids& grids, const MatcherParams& params);
ConfidenceMatrix confidence_matrix(const FeatureGrids& grids, const MatcherParams& params);

struct CoarseMatch {
  int i = 0;
  int j = 0;
  double confidence = 0.0;
};

/// Mutual nearest neighbours of C with C_ij >= threshold.
std::vector<CoarseMatch> select_coarse(const ConfidenceMatrix& C, double threshold);

// Forward intermediates of the fine stage, one entry per refined match.
struct FineWindow {
  int index1 = 0;                // fine-grid index of x1 in image 1
  std::vector<int> candidates;   // fine-grid indices in image 2
  Eigen::MatrixXd positions;     // candidates x 2, pixel coordinates
  Eigen::VectorXd p1, f1;        // embedding and normalized descriptor of x1
  double n1 = 0.0;
  Eigen::MatrixXd P2, F2;        // candidates x d_f
  Eigen::VectorXd n2;
  Eigen::VectorXd s;             // logits
  Eigen::VectorXd prob;
};

struct FineForward {
  std::vector<FineMatch> matches;
  std::vector<FineWindow> windows;
  int dropped = 0;
};

/// Soft-argmax refinement around each coarse match. x1 is the centre of cell
/// i; the window is centred on cell j and clipped to the fine grid.
FineForward refine_fine(const FeatureGrids& grids, const MatcherParams& params,
                        const MatcherConfig& cfg, std::span<const CoarseMatch> coarse);

struct MatchPrediction {
  ConfidenceMatrix C;
  std::vector<CoarseMatch> coarse_matches;
  std::vector<FineMatch> fine_matches;
  int dropped = 0;
};

MatchPrediction forward(const FeatureGrids& grids, const MatcherParams& params, const MatcherConfig& cfg);
MatchPrediction forward(const Image& image1, const Image& image2, const MatcherParams& params,
                        const MatcherConfig& cfg);

/// Reverse mode through the coarse stage given dL/dC. Accumulates into grads.
void coarse_backward(const FeatureGrids& grids, const CoarseForward& fwd, const Eigen::MatrixXd& dC,
                     const MatcherParams& params, MatcherGrads& grads);

/// Reverse mode through the fine stage given dL/dx2 per match. Accumulates.
void fine_backward(const FeatureGrids& grids, const FineForward& fwd,
                   std::span<const Eigen::Vector2d> dx2, const MatcherParams& params,
                   MatcherGrads& grads);

struct SgdState {
  MatcherGrads velocity;
};

struct SgdConfig {
  double lr = 0.05;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  bool train_tau = true;
  double tau_min = 0.01;
  double tau_lr = 0.01;
};

/// v <- momentum * v + g + wd * p;  p <- p - lr * v. Weight decay applies to the
/// embeddings only. tau moves in log space: v_tau <- momentum * v_tau + tau * g_tau,
/// tau <- tau * exp(-tau_lr * v_tau), floored at tau_min.
/// Throws NonFiniteGradient without touching params.
void sgd_step(MatcherParams& params, const MatcherGrads& grads, SgdState& state, const SgdConfig& cfg);

}  // namespace epimatch

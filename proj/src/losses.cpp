#include "epimatch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace epimatch {

namespace {
constexpr double kClamp = 1e-12;

// |(a, b)| below this fraction of |F||x1| means x1 maps onto the epipole.
constexpr double kDegenerateLine = 1e-14;
}  // namespace

HomPoint2 GridSpec::centre(int idx) const {
  const int r = idx / cols;
  const int c = idx % cols;
  return {w * (c + 0.5), w * (r + 0.5), 1.0};
}

std::optional<int> GridSpec::cell_of(double u, double v) const {
  if (!(u >= 0.0 && v >= 0.0)) return std::nullopt;
  const int c = static_cast<int>(std::floor(u / w));
  const int r = static_cast<int>(std::floor(v / w));
  if (c >= cols || r >= rows) return std::nullopt;
  return r * cols + c;
}

void GridSpec::validate() const {
  EPIMATCH_REQUIRE(rows > 0 && cols > 0, ErrorCode::kBadDimensions, "grid must be non-empty");
  EPIMATCH_REQUIRE(w >= 1, ErrorCode::kBadDimensions, "patch width must be >= 1");
}

std::size_t EpipolarMask::num_positives() const {
  std::size_t n = 0;
  for (const auto& row : positives) n += row.size();
  return n;
}

Eigen::MatrixXd EpipolarMask::dense(int cols) const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows(), cols);
  for (int i = 0; i < rows(); ++i) {
    for (int j : positives[static_cast<std::size_t>(i)]) M(i, j) = 1.0;
  }
  return M;
}

void LossConfig::validate() const {
  EPIMATCH_REQUIRE(lambda >= 0.0 && lambda <= 1.0, ErrorCode::kInvalidArgument, "lambda must be in [0,1]");
  EPIMATCH_REQUIRE(theta > 0.0, ErrorCode::kInvalidArgument, "theta must be positive");
  EPIMATCH_REQUIRE(fine_supervision_fraction > 0.0 && fine_supervision_fraction <= 1.0,
                   ErrorCode::kInvalidArgument, "fine_supervision_fraction must be in (0,1]");
}

LineSets epipolar_line_set(const FundamentalMatrix& F, const GridSpec& grid1, const GridSpec& grid2,
                           double theta) {
  grid1.validate();
  grid2.validate();
  const double band = theta * grid2.w / 2.0;
  const double fnorm = F.m.norm();
  LineSets sets(static_cast<std::size_t>(grid1.size()));
  for (int i = 0; i < grid1.size(); ++i) {
    const Eigen::Vector3d x = grid1.centre(i).vec();
    const Eigen::Vector3d l = F.m * x;
    const double n = std::hypot(l.x(), l.y());
    if (!(n > kDegenerateLine * fnorm * x.norm())) continue;
    auto& set = sets[static_cast<std::size_t>(i)];
    for (int j = 0; j < grid2.size(); ++j) {
      const HomPoint2 c = grid2.centre(j);
      if (std::abs(l.x() * c.u + l.y() * c.v + l.z()) <= band * n) set.push_back(j);
    }
  }
  return sets;
}

EpipolarMask epipolar_classification_mask(const ConfidenceMatrix& C, const LineSets& line_sets) {
  EPIMATCH_REQUIRE(static_cast<Eigen::Index>(line_sets.size()) == C.values.rows(),
                   ErrorCode::kBadDimensions, "line sets do not match C");
  EpipolarMask mask;
  const std::size_t m = line_sets.size();
  mask.positives.resize(m);
  mask.excluded.assign(m, false);
  mask.line_sets = line_sets;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& set = line_sets[i];
    if (set.empty()) {
      mask.excluded[i] = true;
      continue;
    }
    int best = set.front();
    for (int j : set) {
      if (C.values(static_cast<Eigen::Index>(i), j) > C.values(static_cast<Eigen::Index>(i), best) ||
          (C.values(static_cast<Eigen::Index>(i), j) == C.values(static_cast<Eigen::Index>(i), best) &&
           j < best)) {
        best = j;
      }
    }
    mask.positives[i].push_back(best);
  }
  return mask;
}

EpipolarMask naive_epipolar_mask(const LineSets& line_sets) {
  EpipolarMask mask;
  mask.line_sets = line_sets;
  mask.positives = line_sets;
  mask.excluded.resize(line_sets.size());
  for (std::size_t i = 0; i < line_sets.size(); ++i) mask.excluded[i] = line_sets[i].empty();
  return mask;
}

EpipolarMask gt_classification_mask(std::span<const std::optional<int>> gt_cells) {
  EpipolarMask mask;
  mask.positives.resize(gt_cells.size());
  mask.excluded.resize(gt_cells.size());
  for (std::size_t i = 0; i < gt_cells.size(); ++i) {
    if (gt_cells[i]) {
      mask.positives[i].push_back(*gt_cells[i]);
    } else {
      mask.excluded[i] = true;
    }
  }
  return mask;
}

CoarseLoss coarse_loss(const ConfidenceMatrix& C, const EpipolarMask& mask) {
  EPIMATCH_REQUIRE(mask.rows() == C.values.rows(), ErrorCode::kBadDimensions, "mask does not match C");
  const std::size_t n = mask.num_positives();
  EPIMATCH_REQUIRE(n > 0, ErrorCode::kEmptySupervision, "mask has no positive entries");
  CoarseLoss out;
  out.grad = Eigen::MatrixXd::Zero(C.values.rows(), C.values.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < mask.rows(); ++i) {
    for (int j : mask.positives[static_cast<std::size_t>(i)]) {
      const double c = C.values(i, j);
      const double cc = std::clamp(c, kClamp, 1.0 - kClamp);
      out.value -= std::log(cc) * inv_n;
      if (c == cc) out.grad(i, j) -= inv_n / cc;
    }
  }
  return out;
}

DistanceGrad d_epi(const FundamentalMatrix& F, const HomPoint2& x1, const HomPoint2& x2_hat) {
  const Eigen::Vector3d x = x1.vec();
  const Eigen::Vector3d l = F.m * x;
  const double n = std::hypot(l.x(), l.y());
  EPIMATCH_REQUIRE(n > kDegenerateLine * F.m.norm() * x.norm(), ErrorCode::kDegenerateLine,
                   "epipolar line of x1 is undefined");
  const HomPoint2 y = x2_hat.normalized();
  const double r = l.x() * y.u + l.y() * y.v + l.z();
  DistanceGrad out;
  out.value = std::abs(r) / n;
  if (r != 0.0) out.grad = (r > 0.0 ? 1.0 : -1.0) * Eigen::Vector2d(l.x(), l.y()) / n;
  return out;
}

FineLoss fine_loss(const FundamentalMatrix& F, std::span<const FineMatch> matches, double scale) {
  EPIMATCH_REQUIRE(!matches.empty(), ErrorCode::kEmptySupervision, "no fine matches");
  FineLoss out;
  out.grad.resize(matches.size());
  const double k = scale / static_cast<double>(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const DistanceGrad d = d_epi(F, matches[i].x1, matches[i].x2);
    out.value += k * d.value;
    out.grad[i] = k * d.grad;
  }
  return out;
}

FineLoss gt_fine_loss(std::span<const FineMatch> matches, std::span<const HomPoint2> targets,
                      double scale) {
  EPIMATCH_REQUIRE(!matches.empty(), ErrorCode::kEmptySupervision, "no fine matches");
  EPIMATCH_REQUIRE(matches.size() == targets.size(), ErrorCode::kBadDimensions,
                   "one target per fine match is required");
  FineLoss out;
  out.grad.resize(matches.size());
  const double k = scale / static_cast<double>(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Eigen::Vector2d diff = matches[i].x2.xy() - targets[i].xy();
    const double d = diff.norm();
    out.value += k * d;
    out.grad[i] = d > 0.0 ? Eigen::Vector2d(k * diff / d) : Eigen::Vector2d::Zero();
  }
  return out;
}

TotalLoss combine_losses(const CoarseLoss* coarse, const FineLoss* fine, double lambda) {
  TotalLoss out;
  if (coarse != nullptr) {
    out.coarse = coarse->value;
    out.dC = (1.0 - lambda) * coarse->grad;
  }
  if (fine != nullptr) {
    out.fine = fine->value;
    out.dfine.reserve(fine->grad.size());
    for (const auto& g : fine->grad) out.dfine.push_back(lambda * g);
  }
  out.value = (1.0 - lambda) * out.coarse + lambda * out.fine;
  return out;
}

TotalLoss total_epipolar_loss(const ConfidenceMatrix& C, std::span<const FineMatch> fine_matches,
                              const FundamentalMatrix& F, const LossConfig& cfg) {
  cfg.validate();
  std::optional<CoarseLoss> coarse;
  EpipolarMask mask;
  if (cfg.lambda < 1.0) {
    const LineSets sets = epipolar_line_set(F, C.grid1, C.grid2, cfg.theta);
    mask = cfg.naive_mask ? naive_epipolar_mask(sets) : epipolar_classification_mask(C, sets);
    coarse = coarse_loss(C, mask);
  }
  std::optional<FineLoss> fine;
  if (cfg.lambda > 0.0) fine = fine_loss(F, fine_matches, cfg.fine_weight_scale);
  TotalLoss out = combine_losses(coarse ? &*coarse : nullptr, fine ? &*fine : nullptr, cfg.lambda);
  out.mask = std::move(mask);
  return out;
}

}  // namespace epimatch

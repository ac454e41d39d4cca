#include "epimatch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace epimatch {

namespace {

// Patches with less energy than this after mean removal carry no texture.
constexpr double kTexturelessNorm = 1e-8;

// Mean-free, unit-norm copy of a flattened patch; false when textureless.
bool normalize_patch(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  row.array() -= row.mean();
  const double n = row.norm();
  if (n <= kTexturelessNorm) {
    row.setZero();
    return false;
  }
  row /= n;
  return true;
}

void normalize_rows(const Eigen::MatrixXd& P, Eigen::MatrixXd& D, Eigen::VectorXd& n) {
  D.resizeLike(P);
  n.resize(P.rows());
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    n(i) = P.row(i).norm();
    // NaN norms fall through so non-finite input surfaces in the loss.
    if (!(n(i) == 0.0)) {
      D.row(i) = P.row(i) / n(i);
    } else {
      D.row(i).setZero();
    }
  }
}

// Reverse of D = P / |P| row by row.
Eigen::MatrixXd normalize_rows_backward(const Eigen::MatrixXd& D, const Eigen::VectorXd& n,
                                        const Eigen::MatrixXd& dD) {
  Eigen::MatrixXd dP = Eigen::MatrixXd::Zero(D.rows(), D.cols());
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    if (n(i) > 0.0) dP.row(i) = (dD.row(i) - D.row(i) * D.row(i).dot(dD.row(i))) / n(i);
  }
  return dP;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& S) {
  Eigen::MatrixXd A(S.rows(), S.cols());
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const double mx = S.row(i).maxCoeff();
    A.row(i) = (S.row(i).array() - mx).exp();
    A.row(i) /= A.row(i).sum();
  }
  return A;
}

}  // namespace

void MatcherConfig::validate() const {
  EPIMATCH_REQUIRE(w >= 2 && w % 2 == 0, ErrorCode::kInvalidArgument, "w must be even and >= 2");
  EPIMATCH_REQUIRE(fine_stride >= 1 && (w / 2) % fine_stride == 0, ErrorCode::kInvalidArgument,
                   "fine stride must divide w / 2");
  EPIMATCH_REQUIRE(fine_patch >= 2 && fine_patch % 2 == 0 && fine_patch <= w, ErrorCode::kInvalidArgument,
                   "fine patch must be even and no wider than a cell");
  EPIMATCH_REQUIRE(d >= 1 && d_f >= 1 && window_radius >= 0, ErrorCode::kInvalidArgument,
                   "embedding sizes must be positive");
  EPIMATCH_REQUIRE(tau > 0.0 && tau_min > 0.0, ErrorCode::kInvalidArgument, "tau must be positive");
}

MatcherParams MatcherParams::init(const MatcherConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coarse(0.0, 1.0 / std::sqrt(cfg.coarse_dim()));
  std::normal_distribution<double> fine(0.0, 1.0 / std::sqrt(cfg.fine_dim()));
  MatcherParams p;
  p.W_coarse.resize(cfg.coarse_dim(), cfg.d);
  p.W_fine.resize(cfg.fine_dim(), cfg.d_f);
  for (Eigen::Index k = 0; k < p.W_coarse.size(); ++k) p.W_coarse.data()[k] = coarse(rng);
  for (Eigen::Index k = 0; k < p.W_fine.size(); ++k) p.W_fine.data()[k] = fine(rng);
  p.tau = cfg.tau;
  return p;
}

void MatcherParams::validate(const MatcherConfig& cfg) const {
  EPIMATCH_REQUIRE(W_coarse.rows() == cfg.coarse_dim() && W_coarse.cols() == cfg.d,
                   ErrorCode::kBadDimensions, "W_coarse shape does not match the config");
  EPIMATCH_REQUIRE(W_fine.rows() == cfg.fine_dim() && W_fine.cols() == cfg.d_f, ErrorCode::kBadDimensions,
                   "W_fine shape does not match the config");
  EPIMATCH_REQUIRE(W_coarse.allFinite() && W_fine.allFinite(), ErrorCode::kInvalidArgument,
                   "parameters must be finite");
  EPIMATCH_REQUIRE(tau > 0.0 && std::isfinite(tau), ErrorCode::kInvalidArgument, "tau must be positive");
}

MatcherGrads MatcherGrads::zeros_like(const MatcherParams& p) {
  return {Eigen::MatrixXd::Zero(p.W_coarse.rows(), p.W_coarse.cols()),
          Eigen::MatrixXd::Zero(p.W_fine.rows(), p.W_fine.cols()), 0.0};
}

MatcherGrads& MatcherGrads::operator+=(const MatcherGrads& o) {
  W_coarse += o.W_coarse;
  W_fine += o.W_fine;
  tau += o.tau;
  return *this;
}

MatcherGrads& MatcherGrads::operator*=(double s) {
  W_coarse *= s;
  W_fine *= s;
  tau *= s;
  return *this;
}

bool MatcherGrads::all_finite() const {
  return W_coarse.allFinite() && W_fine.allFinite() && std::isfinite(tau);
}

ImageFeatures extract_image_features(const Image& image, const MatcherConfig& cfg) {
  cfg.validate();
  const int H = static_cast<int>(image.rows());
  const int W = static_cast<int>(image.cols());
  EPIMATCH_REQUIRE(H > 0 && W > 0 && H % cfg.w == 0 && W % cfg.w == 0, ErrorCode::kBadDimensions,
                   "image size " + std::to_string(W) + "x" + std::to_string(H) +
                       " is not a multiple of the cell width " + std::to_string(cfg.w));
  ImageFeatures f;
  f.grid = {H / cfg.w, W / cfg.w, cfg.w};
  const int m = f.grid.size();
  f.coarse.resize(m, cfg.coarse_dim());
  f.textureless.assign(static_cast<std::size_t>(m), false);
  for (int r = 0; r < f.grid.rows; ++r) {
    for (int c = 0; c < f.grid.cols; ++c) {
      const int idx = r * f.grid.cols + c;
      for (int y = 0; y < cfg.w; ++y) {
        for (int x = 0; x < cfg.w; ++x) {
          f.coarse(idx, y * cfg.w + x) = image(r * cfg.w + y, c * cfg.w + x);
        }
      }
      f.textureless[static_cast<std::size_t>(idx)] = !normalize_patch(f.coarse.row(idx));
    }
  }

  const int half = cfg.fine_patch / 2;
  FineGrid& g = f.fine_grid;
  g.stride = cfg.fine_stride;
  g.lo = (half + g.stride - 1) / g.stride;
  g.hi_u = (W - half) / g.stride;
  g.hi_v = (H - half) / g.stride;
  f.fine.resize(static_cast<Eigen::Index>(g.rows()) * g.cols(), cfg.fine_dim());
  for (int b = g.lo; b <= g.hi_v; ++b) {
    for (int a = g.lo; a <= g.hi_u; ++a) {
      const int idx = g.index(a, b);
      const int u0 = g.stride * a - half;
      const int v0 = g.stride * b - half;
      for (int y = 0; y < cfg.fine_patch; ++y) {
        for (int x = 0; x < cfg.fine_patch; ++x) {
          f.fine(idx, y * cfg.fine_patch + x) = image(v0 + y, u0 + x);
        }
      }
      normalize_patch(f.fine.row(idx));
    }
  }
  return f;
}

FeatureGrids extract_features(const Image& image1, const Image& image2, const MatcherConfig& cfg) {
  return {extract_image_features(image1, cfg), extract_image_features(image2, cfg)};
}

CoarseForward coarse_forward(const FeatureGrids& grids, const MatcherParams& params) {
  CoarseForward f;
  f.P1 = grids.f1.coarse * params.W_coarse;
  f.P2 = grids.f2.coarse * params.W_coarse;
  normalize_rows(f.P1, f.D1, f.n1);
  normalize_rows(f.P2, f.D2, f.n2);
  f.S = (f.D1 * f.D2.transpose()) / params.tau;
  f.A = softmax_rows(f.S);
  f.B = softmax_rows(f.S.transpose()).transpose();
  f.C.values = f.A.cwiseProduct(f.B);
  f.C.grid1 = grids.f1.grid;
  f.C.grid2 = grids.f2.grid;
  return f;
}

ConfidenceMatrix confidence_matrix(const FeatureGrids& grids, const MatcherParams& params) {
  return coarse_forward(grids, params).C;
}

std::vector<CoarseMatch> select_coarse(const ConfidenceMatrix& C, double threshold) {
  const Eigen::Index m1 = C.values.rows();
  const Eigen::Index m2 = C.values.cols();
  std::vector<Eigen::Index> col_best(static_cast<std::size_t>(m2), 0);
  for (Eigen::Index j = 0; j < m2; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < m1; ++i) {
      if (C.values(i, j) > C.values(best, j)) best = i;
    }
    col_best[static_cast<std::size_t>(j)] = best;
  }
  std::vector<CoarseMatch> out;
  for (Eigen::Index i = 0; i < m1; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m2; ++j) {
      if (C.values(i, j) > C.values(i, best)) best = j;
    }
    if (col_best[static_cast<std::size_t>(best)] == i && C.values(i, best) >= threshold) {
      out.push_back({static_cast<int>(i), static_cast<int>(best), C.values(i, best)});
    }
  }
  return out;
}

FineForward refine_fine(const FeatureGrids& grids, const MatcherParams& params,
                        const MatcherConfig& cfg, std::span<const CoarseMatch> coarse) {
  FineForward out;
  const FineGrid& g1 = grids.f1.fine_grid;
  const FineGrid& g2 = grids.f2.fine_grid;
  const int R = cfg.window_radius;
  for (const CoarseMatch& cm : coarse) {
    const HomPoint2 x1 = grids.f1.grid.centre(cm.i);
    const HomPoint2 c2 = grids.f2.grid.centre(cm.j);
    const int a1 = static_cast<int>(x1.u) / g1.stride;
    const int b1 = static_cast<int>(x1.v) / g1.stride;
    const int ac = static_cast<int>(c2.u) / g2.stride;
    const int bc = static_cast<int>(c2.v) / g2.stride;

    FineWindow win;
    for (int b = std::max(bc - R, g2.lo); b <= std::min(bc + R, g2.hi_v); ++b) {
      for (int a = std::max(ac - R, g2.lo); a <= std::min(ac + R, g2.hi_u); ++a) {
        win.candidates.push_back(g2.index(a, b));
      }
    }
    if (win.candidates.empty() || a1 < g1.lo || a1 > g1.hi_u || b1 < g1.lo || b1 > g1.hi_v) {
      ++out.dropped;
      continue;
    }
    const auto K = static_cast<Eigen::Index>(win.candidates.size());
    win.positions.resize(K, 2);
    Eigen::MatrixXd raw2(K, cfg.fine_dim());
    for (Eigen::Index k = 0; k < K; ++k) {
      const int idx = win.candidates[static_cast<std::size_t>(k)];
      win.positions(k, 0) = g2.stride * (g2.lo + idx % g2.cols());
      win.positions(k, 1) = g2.stride * (g2.lo + idx / g2.cols());
      raw2.row(k) = grids.f2.fine.row(idx);
    }
    win.index1 = g1.index(a1, b1);
    win.p1 = (grids.f1.fine.row(win.index1) * params.W_fine).transpose();
    win.n1 = win.p1.norm();
    win.f1 = win.n1 > 0.0 ? Eigen::VectorXd(win.p1 / win.n1) : Eigen::VectorXd::Zero(win.p1.size());
    win.P2 = raw2 * params.W_fine;
    normalize_rows(win.P2, win.F2, win.n2);
    win.s = win.F2 * win.f1 / params.tau;
    win.prob = (win.s.array() - win.s.maxCoeff()).exp();
    win.prob /= win.prob.sum();
    const Eigen::Vector2d x2 = win.positions.transpose() * win.prob;

    out.matches.push_back({x1, {x2.x(), x2.y()}, cm.confidence, cm.i, cm.j});
    out.windows.push_back(std::move(win));
  }
  return out;
}

MatchPrediction forward(const FeatureGrids& grids, const MatcherParams& params, const MatcherConfig& cfg) {
  MatchPrediction pred;
  pred.C = confidence_matrix(grids, params);
  pred.coarse_matches = select_coarse(pred.C, cfg.match_threshold);
  FineForward fine = refine_fine(grids, params, cfg, pred.coarse_matches);
  pred.fine_matches = std::move(fine.matches);
  pred.dropped = fine.dropped;
  return pred;
}

MatchPrediction forward(const Image& image1, const Image& image2, const MatcherParams& params,
                        const MatcherConfig& cfg) {
  params.validate(cfg);
  return forward(extract_features(image1, image2, cfg), params, cfg);
}

void coarse_backward(const FeatureGrids& grids, const CoarseForward& fwd, const Eigen::MatrixXd& dC,
                     const MatcherParams& params, MatcherGrads& grads) {
  const Eigen::MatrixXd dA = dC.cwiseProduct(fwd.B);
  const Eigen::MatrixXd dB = dC.cwiseProduct(fwd.A);
  // Softmax along rows: dS = A * (dA - <dA, A>_row); along columns likewise.
  const Eigen::VectorXd row_dot = dA.cwiseProduct(fwd.A).rowwise().sum();
  const Eigen::RowVectorXd col_dot = dB.cwiseProduct(fwd.B).colwise().sum();
  const Eigen::MatrixXd dS = fwd.A.cwiseProduct(dA.colwise() - row_dot) +
                             fwd.B.cwiseProduct(dB.rowwise() - col_dot);
  const double tau = params.tau;
  grads.tau -= dS.cwiseProduct(fwd.S).sum() / tau;
  const Eigen::MatrixXd dD1 = dS * fwd.D2 / tau;
  const Eigen::MatrixXd dD2 = dS.transpose() * fwd.D1 / tau;
  const Eigen::MatrixXd dP1 = normalize_rows_backward(fwd.D1, fwd.n1, dD1);
  const Eigen::MatrixXd dP2 = normalize_rows_backward(fwd.D2, fwd.n2, dD2);
  grads.W_coarse += grids.f1.coarse.transpose() * dP1 + grids.f2.coarse.transpose() * dP2;
}

void fine_backward(const FeatureGrids& grids, const FineForward& fwd,
                   std::span<const Eigen::Vector2d> dx2, const MatcherParams& params,
                   MatcherGrads& grads) {
  EPIMATCH_REQUIRE(dx2.size() == fwd.windows.size(), ErrorCode::kBadDimensions,
                   "one upstream gradient per fine match is required");
  const double tau = params.tau;
  for (std::size_t k = 0; k < fwd.windows.size(); ++k) {
    const FineWindow& win = fwd.windows[k];
    if (dx2[k].isZero()) continue;
    const Eigen::VectorXd dprob = win.positions * dx2[k];
    const Eigen::VectorXd ds = win.prob.cwiseProduct(dprob.array().matrix() -
                                                     Eigen::VectorXd::Constant(dprob.size(), win.prob.dot(dprob)));
    grads.tau -= ds.dot(win.s) / tau;
    const Eigen::VectorXd df1 = win.F2.transpose() * ds / tau;
    const Eigen::MatrixXd dF2 = ds * win.f1.transpose() / tau;
    if (win.n1 > 0.0) {
      const Eigen::VectorXd dp1 = (df1 - win.f1 * win.f1.dot(df1)) / win.n1;
      grads.W_fine += grids.f1.fine.row(win.index1).transpose() * dp1.transpose();
    }
    const Eigen::MatrixXd dP2 = normalize_rows_backward(win.F2, win.n2, dF2);
    for (std::size_t c = 0; c < win.candidates.size(); ++c) {
      grads.W_fine += grids.f2.fine.row(win.candidates[c]).transpose() *
                      dP2.row(static_cast<Eigen::Index>(c));
    }
  }
}

void sgd_step(MatcherParams& params, const MatcherGrads& grads, SgdState& state, const SgdConfig& cfg) {
  EPIMATCH_REQUIRE(grads.all_finite(), ErrorCode::kNonFiniteGradient, "gradient has non-finite entries");
  if (state.velocity.W_coarse.size() == 0) state.velocity = MatcherGrads::zeros_like(params);
  state.velocity.W_coarse = cfg.momentum * state.velocity.W_coarse + grads.W_coarse +
                            cfg.weight_decay * params.W_coarse;
  state.velocity.W_fine = cfg.momentum * state.velocity.W_fine + grads.W_fine +
                          cfg.weight_decay * params.W_fine;
  params.W_coarse -= cfg.lr * state.velocity.W_coarse;
  params.W_fine -= cfg.lr * state.velocity.W_fine;
  if (cfg.train_tau) {
    state.velocity.tau = cfg.momentum * state.velocity.tau + params.tau * grads.tau;
    params.tau = std::max(cfg.tau_min, params.tau * std::exp(-cfg.tau_lr * state.velocity.tau));
  }
}

}  // namespace epimatch

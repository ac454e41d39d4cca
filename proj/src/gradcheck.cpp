#include "epimatch/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "epimatch/losses.hpp"
#include "epimatch/matcher.hpp"

namespace epimatch {

namespace {

// Per-entry relative error; entries smaller than the floor compare absolutely.
double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

FundamentalMatrix random_fundamental(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> f(300.0, 700.0), c(280.0, 360.0), angle(0.0, 0.5);
  RelativePose pose;
  pose.R = rotation_from_axis_angle({n(rng), n(rng), n(rng)}, angle(rng));
  pose.t = Eigen::Vector3d{n(rng), n(rng), n(rng)}.normalized();
  const CameraIntrinsics K1{f(rng), f(rng), c(rng), c(rng)};
  const CameraIntrinsics K2{f(rng), f(rng), c(rng), c(rng)};
  return fundamental_from_pose(K1, K2, pose);
}

struct ToyInstance {
  FeatureGrids grids;
  std::vector<CoarseMatch> pairs;
  Eigen::MatrixXd G;                // upstream dL/dC
  std::vector<Eigen::Vector2d> g;   // upstream dL/dx2
};

// L = <G, C> + sum_k <g_k, x2_k>; any smooth scalar of the outputs exercises
// the same reverse-mode paths as the training losses. The two parts are
// returned separately so each central difference is taken before summing,
// which keeps round-off of one part out of the other's small entries.
std::pair<double, double> toy_loss(const ToyInstance& inst, const MatcherParams& params,
                                   const MatcherConfig& cfg) {
  const CoarseForward cf = coarse_forward(inst.grids, params);
  const FineForward ff = refine_fine(inst.grids, params, cfg, inst.pairs);
  double fine = 0.0;
  for (std::size_t k = 0; k < ff.matches.size(); ++k) fine += inst.g[k].dot(ff.matches[k].x2.xy());
  return {inst.G.cwiseProduct(cf.C.values).sum(), fine};
}

double central(const std::pair<double, double>& plus, const std::pair<double, double>& minus, double h) {
  return ((plus.first - minus.first) + (plus.second - minus.second)) / (2 * h);
}

ToyInstance make_toy(std::mt19937_64& rng, const MatcherConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  Image base(36, 36);
  for (Eigen::Index k = 0; k < base.size(); ++k) base.data()[k] = u(rng);
  // Image 2 is image 1 shifted by a couple of pixels plus noise so C is peaked
  // but not one-hot.
  const Image im1 = base.block(0, 0, 32, 32);
  Image im2 = base.block(2, 3, 32, 32);
  for (Eigen::Index k = 0; k < im2.size(); ++k) im2.data()[k] += 0.1 * n(rng);
  ToyInstance inst;
  inst.grids = extract_features(im1, im2, cfg);
  const int m = inst.grids.f1.grid.size();
  std::uniform_int_distribution<int> cell(0, m - 1);
  for (int k = 0; k < 6; ++k) inst.pairs.push_back({cell(rng), cell(rng), 1.0});
  inst.G.resize(m, m);
  for (Eigen::Index k = 0; k < inst.G.size(); ++k) inst.G.data()[k] = n(rng);
  for (int k = 0; k < 6; ++k) inst.g.push_back(Eigen::Vector2d{n(rng), n(rng)});
  return inst;
}

}  // namespace

GradcheckComponent check_d_epi(const GradcheckOptions& opt) {
  GradcheckComponent out{"d_epi", 0, 0.0, opt.d_epi_tolerance, false};
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> px(0.0, 640.0);
  const double h = opt.d_epi_step;
  const double sign = opt.inject_sign_flip ? -1.0 : 1.0;
  while (out.instances < opt.d_epi_instances) {
    const FundamentalMatrix F = random_fundamental(rng);
    const HomPoint2 x1{px(rng), px(rng)};
    const HomPoint2 x2{px(rng), px(rng)};
    const DistanceGrad d = d_epi(F, x1, x2);
    // The distance has a kink on the line itself; keep the stencil off it.
    if (d.value < 10.0 * h) continue;
    const double gu = (d_epi(F, x1, {x2.u + h, x2.v}).value - d_epi(F, x1, {x2.u - h, x2.v}).value) / (2 * h);
    const double gv = (d_epi(F, x1, {x2.u, x2.v + h}).value - d_epi(F, x1, {x2.u, x2.v - h}).value) / (2 * h);
    const Eigen::Vector2d fd(gu, gv);
    const double err = (sign * d.grad - fd).norm() / fd.norm();
    out.max_rel_error = std::max(out.max_rel_error, err);
    ++out.instances;
  }
  out.pass = out.max_rel_error < out.tolerance;
  return out;
}

std::vector<GradcheckComponent> check_matcher(const GradcheckOptions& opt) {
  GradcheckComponent wc{"matcher.W_coarse", 0, 0.0, opt.matcher_tolerance, false};
  GradcheckComponent wf{"matcher.W_fine", 0, 0.0, opt.matcher_tolerance, false};
  GradcheckComponent tc{"matcher.tau", 0, 0.0, opt.matcher_tolerance, false};
  MatcherConfig cfg;
  cfg.tau = 0.2;
  const double h = opt.matcher_step;
  const double sign = opt.inject_sign_flip ? -1.0 : 1.0;
  for (int s = 0; s < opt.matcher_seeds; ++s) {
    std::mt19937_64 rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(s));
    const ToyInstance inst = make_toy(rng, cfg);
    const MatcherParams params = MatcherParams::init(cfg, opt.seed + static_cast<std::uint64_t>(s));

    MatcherGrads grads = MatcherGrads::zeros_like(params);
    const CoarseForward cf = coarse_forward(inst.grids, params);
    coarse_backward(inst.grids, cf, inst.G, params, grads);
    const FineForward ff = refine_fine(inst.grids, params, cfg, inst.pairs);
    fine_backward(inst.grids, ff, inst.g, params, grads);
    grads *= sign;

    auto probe = [&](Eigen::MatrixXd MatcherParams::*field, const Eigen::MatrixXd& analytic,
                     GradcheckComponent& comp) {
      MatcherParams p = params;
      Eigen::MatrixXd& W = p.*field;
      for (Eigen::Index k = 0; k < W.size(); ++k) {
        const double orig = W.data()[k];
        W.data()[k] = orig + h;
        const auto lp = toy_loss(inst, p, cfg);
        W.data()[k] = orig - h;
        const auto lm = toy_loss(inst, p, cfg);
        W.data()[k] = orig;
        comp.max_rel_error = std::max(comp.max_rel_error, rel_error(analytic.data()[k], central(lp, lm, h)));
      }
      ++comp.instances;
    };
    probe(&MatcherParams::W_coarse, grads.W_coarse, wc);
    probe(&MatcherParams::W_fine, grads.W_fine, wf);

    MatcherParams p = params;
    p.tau = params.tau + h;
    const auto lp = toy_loss(inst, p, cfg);
    p.tau = params.tau - h;
    const auto lm = toy_loss(inst, p, cfg);
    tc.max_rel_error = std::max(tc.max_rel_error, rel_error(grads.tau, central(lp, lm, h)));
    ++tc.instances;
  }
  for (auto* c : {&wc, &wf, &tc}) c->pass = c->max_rel_error < c->tolerance;
  return {wc, wf, tc};
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  GradcheckReport report;
  report.components.push_back(check_d_epi(opt));
  for (auto& c : check_matcher(opt)) report.components.push_back(std::move(c));
  report.pass = std::all_of(report.components.begin(), report.components.end(),
                            [](const GradcheckComponent& c) { return c.pass; });
  return report;
}

}  // namespace epimatch

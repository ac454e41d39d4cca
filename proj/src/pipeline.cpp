#include "epimatch/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "epimatch/parallel.hpp"
#include "epimatch/seed.hpp"

namespace epimatch {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

// RNG streams.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kFineRowStream = 2;
constexpr std::uint64_t kReplayStream = 3;
constexpr std::uint64_t kPoseNoiseStream = 30;

struct StepOutput {
  MatcherGrads grads;
  double coarse = 0.0;
  double fine = 0.0;
  double total = 0.0;
};

// Picks round(fraction * n) of the given rows, at least one when any exist.
std::vector<int> sample_rows(std::vector<int> rows, double fraction, std::mt19937_64& rng) {
  if (rows.empty() || fraction <= 0.0) return {};
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(fraction * static_cast<double>(rows.size()))), 1, rows.size());
  rows.resize(keep);
  std::sort(rows.begin(), rows.end());
  return rows;
}

// Shared tail: combine, check, backprop.
StepOutput finish_step(const FeatureGrids& grids, const CoarseForward* cf, const CoarseLoss* coarse,
                       const FineForward* ff, const FineLoss* fine, const MatcherParams& params, double lambda,
                       int pair_id) {
  const TotalLoss total = combine_losses(coarse, fine, lambda);
  EPIMATCH_REQUIRE(std::isfinite(total.value), ErrorCode::kNonFiniteLoss,
                   "loss is not finite on pair " + std::to_string(pair_id));
  StepOutput out;
  out.grads = MatcherGrads::zeros_like(params);
  out.coarse = total.coarse;
  out.fine = total.fine;
  out.total = total.value;
  if (coarse != nullptr) coarse_backward(grids, *cf, total.dC, params, out.grads);
  if (fine != nullptr) fine_backward(grids, *ff, total.dfine, params, out.grads);
  return out;
}

StepOutput supervised_step(const RenderedPair& pair, const std::vector<std::optional<GtTarget>>& gt,
                           const MatcherParams& params, const TrainConfig& cfg, std::mt19937_64& rng, int pair_id) {
  const FeatureGrids grids = extract_features(pair.image1, pair.image2, cfg.matcher);
  const double lambda = cfg.loss.lambda;
  CoarseForward cf;
  CoarseLoss coarse;
  if (lambda < 1.0) {
    cf = coarse_forward(grids, params);
    std::vector<std::optional<int>> cells(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i]) cells[i] = gt[i]->cell;
    }
    coarse = coarse_loss(cf.C, gt_classification_mask(cells));
  }
  FineForward ff;
  FineLoss fine;
  if (lambda > 0.0) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i]) rows.push_back(static_cast<int>(i));
    }
    std::vector<CoarseMatch> seeds;
    for (int i : sample_rows(rows, cfg.loss.fine_supervision_fraction, rng)) {
      seeds.push_back({i, gt[static_cast<std::size_t>(i)]->cell, 1.0});
    }
    ff = refine_fine(grids, params, cfg.matcher, seeds);
    std::vector<HomPoint2> targets;
    for (const auto& m : ff.matches) targets.push_back(gt[static_cast<std::size_t>(m.cell1)]->point);
    if (!ff.matches.empty()) fine = gt_fine_loss(ff.matches, targets, cfg.loss.fine_weight_scale);
  }
  const bool has_fine = lambda > 0.0 && !ff.matches.empty();
  return finish_step(grids, &cf, lambda < 1.0 ? &coarse : nullptr, &ff, has_fine ? &fine : nullptr, params, lambda,
                     pair_id);
}

StepOutput epipolar_step(const RenderedPair& pair, const FundamentalMatrix& F, const LineSets& line_sets,
                         const MatcherParams& params, const TrainConfig& cfg, std::mt19937_64& rng, int pair_id) {
  const FeatureGrids grids = extract_features(pair.image1, pair.image2, cfg.matcher);
  const double lambda = cfg.loss.lambda;
  // The argmax cell on each line seeds the fine window even in the naive-mask ablation.
  const CoarseForward cf = coarse_forward(grids, params);
  const EpipolarMask argmax = epipolar_classification_mask(cf.C, line_sets);
  CoarseLoss coarse;
  if (lambda < 1.0) coarse = coarse_loss(cf.C, cfg.loss.naive_mask ? naive_epipolar_mask(line_sets) : argmax);
  FineForward ff;
  FineLoss fine;
  if (lambda > 0.0) {
    std::vector<int> rows;
    for (int i = 0; i < argmax.rows(); ++i) {
      if (!argmax.positives[static_cast<std::size_t>(i)].empty()) rows.push_back(i);
    }
    std::vector<CoarseMatch> seeds;
    for (int i : sample_rows(rows, cfg.loss.fine_supervision_fraction, rng)) {
      const int j = argmax.positives[static_cast<std::size_t>(i)].front();
      seeds.push_back({i, j, cf.C.values(i, j)});
    }
    ff = refine_fine(grids, params, cfg.matcher, seeds);
    if (!ff.matches.empty()) fine = fine_loss(F, ff.matches, cfg.loss.fine_weight_scale);
  }
  const bool has_fine = lambda > 0.0 && !ff.matches.empty();
  return finish_step(grids, &cf, lambda < 1.0 ? &coarse : nullptr, &ff, has_fine ? &fine : nullptr, params, lambda,
                     pair_id);
}

struct Job {
  bool replay = false;  // source-domain pair with the supervised loss
  int pair = 0;
};

using StepFn = std::function<StepOutput(const Job& job, const MatcherParams& params, std::mt19937_64& rng)>;

// Epoch loop shared by every regime. `usable` lists the primary pair indices;
// `n_source` > 0 enables replay with that many source pairs.
TrainResult run_training(const MatcherParams& params0, const TrainConfig& cfg, const std::vector<int>& usable,
                         int n_source, const StepFn& step, const EpochCallback& on_epoch) {
  TrainResult result;
  result.params = params0;
  if (cfg.epochs == 0) return result;
  EPIMATCH_REQUIRE(!usable.empty(), ErrorCode::kEmptyDatasetAfterFilter, "no usable training pairs");
  SgdState state;
  const SgdConfig sgd = cfg.sgd();
  std::vector<int> source_order(static_cast<std::size_t>(n_source));
  std::iota(source_order.begin(), source_order.end(), 0);
  std::size_t source_cursor = 0;
  std::mt19937_64 replay_rng(derive_seed(cfg.seed, 0, kReplayStream));
  if (n_source > 0) std::shuffle(source_order.begin(), source_order.end(), replay_rng);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = usable;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), kShuffleStream));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Job> jobs;
      for (std::size_t k = start; k < end; ++k) jobs.push_back({false, order[k]});
      if (n_source > 0) {
        for (std::size_t k = start; k < end; ++k) {
          if (source_cursor == source_order.size()) {
            std::shuffle(source_order.begin(), source_order.end(), replay_rng);
            source_cursor = 0;
          }
          jobs.push_back({true, source_order[source_cursor++]});
        }
      }
      std::vector<StepOutput> outs(jobs.size());
      parallel_for(static_cast<int>(jobs.size()), [&](int k) {
        const Job& job = jobs[static_cast<std::size_t>(k)];
        // Row sampling depends only on (seed, epoch, pair), not on scheduling.
        std::mt19937_64 rng(derive_seed(cfg.seed ^ (job.replay ? 0x5eedULL : 0ULL),
                                        static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                            static_cast<std::uint64_t>(job.pair),
                                        kFineRowStream));
        outs[static_cast<std::size_t>(k)] = step(job, result.params, rng);
      });
      MatcherGrads grads = MatcherGrads::zeros_like(result.params);
      for (std::size_t k = 0; k < outs.size(); ++k) {
        grads += outs[k].grads;
        if (!jobs[k].replay) {
          log.coarse_loss += outs[k].coarse;
          log.fine_loss += outs[k].fine;
          log.total_loss += outs[k].total;
          ++log.pairs;
        }
      }
      grads *= 1.0 / static_cast<double>(outs.size());
      sgd_step(result.params, grads, state, sgd);
    }
    if (log.pairs > 0) {
      log.coarse_loss /= log.pairs;
      log.fine_loss /= log.pairs;
      log.total_loss /= log.pairs;
    }
    if (on_epoch) on_epoch(log, result.params);
    result.log.push_back(std::move(log));
  }
  return result;
}

std::vector<std::vector<std::optional<GtTarget>>> gt_targets(const std::vector<RenderedPair>& dataset,
                                                             const MatcherConfig& mc) {
  std::vector<std::vector<std::optional<GtTarget>>> out(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), [&](int i) {
    const RenderedPair& p = dataset[static_cast<std::size_t>(i)];
    const GridSpec grid{static_cast<int>(p.image1.rows()) / mc.w, static_cast<int>(p.image1.cols()) / mc.w, mc.w};
    out[static_cast<std::size_t>(i)] = gt_correspondence_grid(p, grid);
  });
  return out;
}

bool any_target(const std::vector<std::optional<GtTarget>>& gt) {
  return std::any_of(gt.begin(), gt.end(), [](const auto& t) { return t.has_value(); });
}

GridSpec coarse_grid(const Image& image, const MatcherConfig& mc) {
  return {static_cast<int>(image.rows()) / mc.w, static_cast<int>(image.cols()) / mc.w, mc.w};
}

}  // namespace

SgdConfig TrainConfig::sgd() const { return {lr, weight_decay, momentum, train_tau, matcher.tau_min, tau_lr}; }

void TrainConfig::validate() const {
  EPIMATCH_REQUIRE(lr > 0.0, ErrorCode::kInvalidArgument, "lr must be positive");
  EPIMATCH_REQUIRE(tau_lr >= 0.0, ErrorCode::kInvalidArgument, "tau_lr must be >= 0");
  EPIMATCH_REQUIRE(batch_size > 0, ErrorCode::kInvalidArgument, "batch_size must be positive");
  EPIMATCH_REQUIRE(epochs >= 0, ErrorCode::kInvalidArgument, "epochs must be >= 0");
  EPIMATCH_REQUIRE(weight_decay >= 0.0 && momentum >= 0.0 && momentum < 1.0, ErrorCode::kInvalidArgument,
                   "weight_decay must be >= 0 and momentum in [0, 1)");
  loss.validate();
  matcher.validate();
}

void PoseNoiseConfig::validate() const {
  EPIMATCH_REQUIRE(rotation_deg >= 0.0 && translation_deg >= 0.0, ErrorCode::kInvalidArgument,
                   "pose noise magnitudes must be >= 0");
}

BootstrapConfig BootstrapConfig::full_resolution() {
  BootstrapConfig c;
  c.min_matches = 100;
  c.min_inliers = 20;
  return c;
}

void BootstrapConfig::validate() const {
  EPIMATCH_REQUIRE(min_matches >= 0 && min_inliers >= 0 && min_inliers <= min_matches, ErrorCode::kInvalidArgument,
                   "bootstrap filter needs 0 <= min_inliers <= min_matches");
  EPIMATCH_REQUIRE(ransac_threshold_px > 0.0, ErrorCode::kInvalidArgument, "RANSAC pixel threshold must be positive");
  ransac.validate();
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream s;
  s.precision(10);
  s << "epoch,coarse_loss,fine_loss,total_loss,pairs,auc5,auc10,auc20,precision\n";
  for (const auto& e : log) {
    s << e.epoch << ',' << e.coarse_loss << ',' << e.fine_loss << ',' << e.total_loss << ',' << e.pairs;
    if (e.eval) {
      s << ',' << e.eval->auc5 << ',' << e.eval->auc10 << ',' << e.eval->auc20 << ',' << e.eval->precision;
    } else {
      s << ",,,,";
    }
    s << '\n';
  }
  return s.str();
}

TrainResult pretrain(const std::vector<RenderedPair>& dataset, const MatcherParams& params0, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  cfg.validate();
  params0.validate(cfg.matcher);
  const auto gt = gt_targets(dataset, cfg.matcher);
  std::vector<int> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (any_target(gt[i])) usable.push_back(static_cast<int>(i));
  }
  TrainResult r = run_training(
      params0, cfg, usable, 0,
      [&](const Job& job, const MatcherParams& params, std::mt19937_64& rng) {
        return supervised_step(dataset[static_cast<std::size_t>(job.pair)], gt[static_cast<std::size_t>(job.pair)],
                               params, cfg, rng, job.pair);
      },
      on_epoch);
  r.skipped_pairs = static_cast<int>(dataset.size() - usable.size());
  return r;
}

RelativePose perturb_pose(const RelativePose& pose, const PoseNoiseConfig& noise, std::uint64_t stream) {
  noise.validate();
  if (!noise.active()) return pose;
  std::mt19937_64 rng(derive_seed(noise.seed, stream, kPoseNoiseStream));
  std::normal_distribution<double> n(0.0, 1.0);
  RelativePose out = pose;
  const Eigen::Vector3d axis{n(rng), n(rng), n(rng)};
  out.R = rotation_from_axis_angle(axis, noise.rotation_deg * kDegToRad) * pose.R;
  if (noise.translation_deg > 0.0 && pose.t.norm() > 0.0) {
    const Eigen::Vector3d t_hat = pose.t.normalized();
    Eigen::Vector3d ortho = Eigen::Vector3d::Zero();
    while (ortho.norm() < 1e-6) {
      const Eigen::Vector3d u{n(rng), n(rng), n(rng)};
      ortho = u - u.dot(t_hat) * t_hat;
    }
    out.t = rotation_from_axis_angle(ortho, noise.translation_deg * kDegToRad) * pose.t;
  }
  return out;
}

std::vector<std::optional<FundamentalMatrix>> fundamentals_from_poses(const std::vector<RenderedPair>& dataset,
                                                                      const PoseNoiseConfig& noise) {
  std::vector<std::optional<FundamentalMatrix>> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const RenderedPair& p = dataset[i];
    try {
      const RelativePose pose = perturb_pose(p.pose, noise, i);
      out[i] = fundamental_from_pose(p.cam1.intrinsics, p.cam2.intrinsics, pose);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateBaseline) throw;
    }
  }
  return out;
}

TrainResult finetune_with_fundamentals(const std::vector<RenderedPair>& dataset,
                                       const std::vector<std::optional<FundamentalMatrix>>& fundamentals,
                                       const MatcherParams& params, const TrainConfig& cfg,
                                       const std::vector<RenderedPair>* source, const EpochCallback& on_epoch) {
  cfg.validate();
  params.validate(cfg.matcher);
  EPIMATCH_REQUIRE(fundamentals.size() == dataset.size(), ErrorCode::kBadDimensions,
                   "one fundamental matrix slot per pair is required");
  EPIMATCH_REQUIRE(!cfg.replay_source || (source != nullptr && !source->empty()), ErrorCode::kInvalidArgument,
                   "replay_source needs a non-empty source dataset");
  std::vector<LineSets> line_sets(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), [&](int i) {
    const auto& F = fundamentals[static_cast<std::size_t>(i)];
    if (!F) return;
    const RenderedPair& p = dataset[static_cast<std::size_t>(i)];
    const GridSpec g1 = coarse_grid(p.image1, cfg.matcher), g2 = coarse_grid(p.image2, cfg.matcher);
    line_sets[static_cast<std::size_t>(i)] = epipolar_line_set(*F, g1, g2, cfg.loss.theta);
  });
  std::vector<int> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const bool any = std::any_of(line_sets[i].begin(), line_sets[i].end(), [](const auto& s) { return !s.empty(); });
    if (fundamentals[i] && any) usable.push_back(static_cast<int>(i));
  }
  std::vector<std::vector<std::optional<GtTarget>>> source_gt;
  if (cfg.replay_source) source_gt = gt_targets(*source, cfg.matcher);
  TrainResult r = run_training(
      params, cfg, usable, cfg.replay_source ? static_cast<int>(source->size()) : 0,
      [&](const Job& job, const MatcherParams& p, std::mt19937_64& rng) {
        const auto k = static_cast<std::size_t>(job.pair);
        if (job.replay) {
          if (!any_target(source_gt[k])) return StepOutput{MatcherGrads::zeros_like(p)};
          return supervised_step((*source)[k], source_gt[k], p, cfg, rng, job.pair);
        }
        return epipolar_step(dataset[k], *fundamentals[k], line_sets[k], p, cfg, rng, job.pair);
      },
      on_epoch);
  r.skipped_pairs = static_cast<int>(dataset.size() - usable.size());
  return r;
}

TrainResult finetune_pose_supervised(const std::vector<RenderedPair>& dataset, const MatcherParams& params,
                                     const TrainConfig& cfg, const PoseNoiseConfig& noise,
                                     const std::vector<RenderedPair>* source, const EpochCallback& on_epoch) {
  return finetune_with_fundamentals(dataset, fundamentals_from_poses(dataset, noise), params, cfg, source, on_epoch);
}

std::string_view verdict_name(BootstrapVerdict v) {
  switch (v) {
    case BootstrapVerdict::kKept:
      return "kept";
    case BootstrapVerdict::kTooFewMatches:
      return "too_few_matches";
    case BootstrapVerdict::kTooFewInliers:
      return "too_few_inliers";
    case BootstrapVerdict::kEstimationFailed:
      return "estimation_failed";
  }
  return "unknown";
}

std::string BootstrapResult::report_csv() const {
  std::ostringstream s;
  s << "index,num_matches,inliers,verdict\n";
  for (const auto& p : pairs) s << p.index << ',' << p.num_matches << ',' << p.inliers << ',' << verdict_name(p.verdict) << '\n';
  return s.str();
}

BootstrapResult bootstrap_fundamentals(const std::vector<RenderedPair>& dataset, const MatcherParams& params,
                                       const MatcherConfig& matcher, const BootstrapConfig& bcfg,
                                       const MatchProvider& provider) {
  bcfg.validate();
  BootstrapResult out;
  out.fundamentals.resize(dataset.size());
  out.pairs.resize(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), [&](int i) {
    const RenderedPair& pair = dataset[static_cast<std::size_t>(i)];
    const auto matches = provider ? provider(pair, i) : predict_matches(pair, params, matcher);
    BootstrapPair& rec = out.pairs[static_cast<std::size_t>(i)];
    rec.index = i;
    rec.num_matches = static_cast<int>(matches.size());
    if (rec.num_matches < bcfg.min_matches || rec.num_matches < bcfg.ransac.min_sample) {
      rec.verdict = BootstrapVerdict::kTooFewMatches;
      return;
    }
    RansacConfig rc = bcfg.ransac;
    const double f = 0.5 * (pair.cam1.intrinsics.fx + pair.cam1.intrinsics.fy);
    rc.inlier_threshold = 2.0 * std::pow(bcfg.ransac_threshold_px / f, 2);
    try {
      const RansacResult r = ransac_fundamental(matches, pair.cam1.intrinsics, pair.cam2.intrinsics, rc);
      rec.inliers = static_cast<int>(r.inlier_count);
      if (rec.inliers < bcfg.min_inliers || r.no_consensus) {
        rec.verdict = BootstrapVerdict::kTooFewInliers;
        return;
      }
      out.fundamentals[static_cast<std::size_t>(i)] = r.F;
    } catch (const Error&) {
      rec.verdict = BootstrapVerdict::kEstimationFailed;
    }
  });
  for (const auto& p : out.pairs) {
    switch (p.verdict) {
      case BootstrapVerdict::kKept:
        ++out.kept;
        break;
      case BootstrapVerdict::kTooFewMatches:
        ++out.dropped_few_matches;
        break;
      case BootstrapVerdict::kTooFewInliers:
        ++out.dropped_few_inliers;
        break;
      case BootstrapVerdict::kEstimationFailed:
        ++out.dropped_failed;
        break;
    }
  }
  return out;
}

BootstrapTrainResult bootstrap_finetune(const std::vector<RenderedPair>& dataset, const MatcherParams& params,
                                        const TrainConfig& cfg, const BootstrapConfig& bcfg,
                                        const std::vector<RenderedPair>* source, const EpochCallback& on_epoch) {
  BootstrapTrainResult out;
  out.bootstrap = bootstrap_fundamentals(dataset, params, cfg.matcher, bcfg);
  EPIMATCH_REQUIRE(out.bootstrap.kept > 0, ErrorCode::kEmptyDatasetAfterFilter,
                   "bootstrap filter dropped all " + std::to_string(dataset.size()) + " pairs");
  out.train = finetune_with_fundamentals(dataset, out.bootstrap.fundamentals, params, cfg, source, on_epoch);
  return out;
}

}  // namespace epimatch

#pragma once

// Training regimes: correspondence-supervised pretraining, epipolar
// finetuning from known or perturbed poses, and bootstrapped finetuning from
// fundamental matrices the pretrained matcher estimates itself.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "epimatch/matcher.hpp"
#include "epimatch/metrics.hpp"
#include "epimatch/robust.hpp"
#include "epimatch/synth.hpp"

namespace epimatch {

struct TrainConfig {
  double lr = 0.05;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  int batch_size = 8;
  int epochs = 10;
  bool train_tau = true;
  double tau_lr = 0.01;
  LossConfig loss;
  MatcherConfig matcher;
  std::uint64_t seed = 0;
  // Mix an equal number of source-domain pairs, with their supervised loss,
  // into every finetuning batch.
  bool replay_source = false;

  SgdConfig sgd() const;
  void validate() const;
};

struct PoseNoiseConfig {
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
  std::uint64_t seed = 0;

  bool active() const { return rotation_deg > 0.0 || translation_deg > 0.0; }
  void validate() const;
};

struct BootstrapConfig {
  int min_matches = 30;
  int min_inliers = 12;
  RansacConfig ransac;
  // Inlier threshold as a pixel error, converted like EvalConfig's.
  double ransac_threshold_px = 1.0;

  /// Filter thresholds used on full-size images (100 matches, 20 inliers).
  static BootstrapConfig full_resolution();
  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double coarse_loss = 0.0;
  double fine_loss = 0.0;
  double total_loss = 0.0;
  int pairs = 0;  // pair-steps contributing to the means
  std::optional<EvalReport> eval;
};

std::string epoch_log_csv(const std::vector<EpochLog>& log);

// Called after every epoch; may fill log.eval.
using EpochCallback = std::function<void(EpochLog& log, const MatcherParams& params)>;

struct TrainResult {
  MatcherParams params;
  std::vector<EpochLog> log;
  int skipped_pairs = 0;  // degenerate baseline or no supervision
};

/// Minimizes (1 - lambda) * coarse NLL on ground-truth cell matches plus lambda
/// times the mean distance of refined matches to their ground-truth targets.
TrainResult pretrain(const std::vector<RenderedPair>& dataset, const MatcherParams& params0, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

/// Relative pose after a seeded perturbation: R is rotated about a random axis
/// by rotation_deg; t is rotated by translation_deg about a random axis
/// orthogonal to it, so its direction changes by exactly that angle.
RelativePose perturb_pose(const RelativePose& pose, const PoseNoiseConfig& noise, std::uint64_t stream);

/// Per-pair F from the (optionally perturbed) ground-truth pose; nullopt for
/// a degenerate baseline.
std::vector<std::optional<FundamentalMatrix>> fundamentals_from_poses(const std::vector<RenderedPair>& dataset,
                                                                      const PoseNoiseConfig& noise);

/// Epipolar finetuning with one fixed F per pair; pairs without F are
/// skipped. `source` supplies the replay pairs when cfg.replay_source is set.
TrainResult finetune_with_fundamentals(const std::vector<RenderedPair>& dataset,
                                       const std::vector<std::optional<FundamentalMatrix>>& fundamentals,
                                       const MatcherParams& params, const TrainConfig& cfg,
                                       const std::vector<RenderedPair>* source = nullptr,
                                       const EpochCallback& on_epoch = {});

TrainResult finetune_pose_supervised(const std::vector<RenderedPair>& dataset, const MatcherParams& params,
                                     const TrainConfig& cfg, const PoseNoiseConfig& noise = {},
                                     const std::vector<RenderedPair>* source = nullptr,
                                     const EpochCallback& on_epoch = {});

enum class BootstrapVerdict { kKept, kTooFewMatches, kTooFewInliers, kEstimationFailed };
std::string_view verdict_name(BootstrapVerdict v);

struct BootstrapPair {
  int index = 0;
  int num_matches = 0;
  int inliers = 0;
  BootstrapVerdict verdict = BootstrapVerdict::kKept;
};

struct BootstrapResult {
  std::vector<std::optional<FundamentalMatrix>> fundamentals;  // set for kept pairs
  std::vector<BootstrapPair> pairs;
  int kept = 0;
  int dropped_few_matches = 0;
  int dropped_few_inliers = 0;
  int dropped_failed = 0;

  std::string report_csv() const;
};

/// Runs the matcher (or `provider` when given) on every pair, fits F with
/// RANSAC and keeps pairs passing both thresholds. Uses only images and K.
BootstrapResult bootstrap_fundamentals(const std::vector<RenderedPair>& dataset, const MatcherParams& params,
                                       const MatcherConfig& matcher, const BootstrapConfig& bcfg,
                                       const MatchProvider& provider = {});

struct BootstrapTrainResult {
  TrainResult train;
  BootstrapResult bootstrap;
};

/// bootstrap_fundamentals once, then finetune_with_fundamentals with the
/// estimates held fixed. Throws EmptyDatasetAfterFilter when nothing is kept.
BootstrapTrainResult bootstrap_finetune(const std::vector<RenderedPair>& dataset, const MatcherParams& params,
                                        const TrainConfig& cfg, const BootstrapConfig& bcfg,
                                        const std::vector<RenderedPair>* source = nullptr,
                                        const EpochCallback& on_epoch = {});

}  // namespace epimatch

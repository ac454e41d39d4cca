#include "epimatch/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "epimatch/parallel.hpp"

namespace epimatch {
namespace {

std::vector<RenderedPair> render(const char* domain, std::uint64_t seed, int n) {
  const SceneSpec spec = make_domain(domain, seed);
  std::vector<RenderedPair> out;
  for (int i = 0; i < n; ++i) out.push_back(sample_pair(spec, i));
  return out;
}

const std::vector<RenderedPair>& domain_a() {
  static const auto data = render("A", 21, 6);
  return data;
}

const std::vector<RenderedPair>& domain_b() {
  static const auto data = render("B", 22, 6);
  return data;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.lr = 0.5;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.seed = 4;
  return cfg;
}

MatcherParams init(const TrainConfig& cfg) { return MatcherParams::init(cfg.matcher, 9); }

std::vector<std::optional<FundamentalMatrix>> exact_fundamentals(const std::vector<RenderedPair>& data) {
  std::vector<std::optional<FundamentalMatrix>> out;
  for (const auto& p : data) out.push_back(p.F_gt);
  return out;
}

// Exact correspondences on a 4-pixel grid, from the renderer's depth.
std::vector<Correspondence> oracle_matches(const RenderedPair& pair) {
  const GridSpec fine{32, 32, 4};
  std::vector<Correspondence> out;
  const auto gt = gt_correspondence_grid(pair, fine);
  for (int i = 0; i < fine.size(); ++i) {
    if (const auto& t = gt[static_cast<std::size_t>(i)]) out.push_back({fine.centre(i), t->point, 1.0});
  }
  return out;
}

TEST(Pretrain, ZeroEpochsLeaveParamsUnchanged) {
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const MatcherParams p0 = init(cfg);
  const TrainResult r = pretrain(domain_a(), p0, cfg);
  EXPECT_TRUE(r.params == p0);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(finetune_pose_supervised(domain_b(), p0, cfg).params == p0);
}

TEST(Pretrain, SameSeedGivesIdenticalParams) {
  const TrainConfig cfg = small_config();
  const MatcherParams p0 = init(cfg);
  const TrainResult a = pretrain(domain_a(), p0, cfg);
  const TrainResult b = pretrain(domain_a(), p0, cfg);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_FALSE(a.params == p0);
  ASSERT_EQ(a.log.size(), 2u);
  EXPECT_EQ(a.log[1].coarse_loss, b.log[1].coarse_loss);

  TrainConfig other = cfg;
  other.seed = 5;
  EXPECT_FALSE(pretrain(domain_a(), p0, other).params == a.params);
}

TEST(Pretrain, ThreadCountDoesNotChangeTheResult) {
  const TrainConfig cfg = small_config();
  const MatcherParams p0 = init(cfg);
  set_num_threads(1);
  const TrainResult serial = pretrain(domain_a(), p0, cfg);
  set_num_threads(3);
  const TrainResult threaded = pretrain(domain_a(), p0, cfg);
  set_num_threads(1);
  EXPECT_TRUE(serial.params == threaded.params);
}

TEST(Pretrain, CoarseLossDecreases) {
  TrainConfig cfg = small_config();
  cfg.epochs = 6;
  const TrainResult r = pretrain(domain_a(), init(cfg), cfg);
  ASSERT_EQ(r.log.size(), 6u);
  EXPECT_LT(r.log.back().coarse_loss, r.log.front().coarse_loss);
  for (const auto& e : r.log) EXPECT_EQ(e.pairs, 6);
}

TEST(Pretrain, NonFiniteImageAbortsWithPairId) {
  std::vector<RenderedPair> data = {domain_a()[0], domain_a()[1]};
  data[1].image1(40, 40) = std::nan("");
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  try {
    pretrain(data, init(cfg), cfg);
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos) << e.what();
  }
}

TEST(Pretrain, EpochLogCsv) {
  const TrainResult r = pretrain(domain_a(), init(small_config()), small_config());
  const std::string csv = epoch_log_csv(r.log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,coarse_loss,fine_loss,total_loss,pairs,auc5,auc10,auc20,precision");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(PerturbPose, ZeroNoiseIsIdentity) {
  const RelativePose& pose = domain_b()[0].pose;
  const RelativePose out = perturb_pose(pose, {}, 3);
  EXPECT_EQ(out.R, pose.R);
  EXPECT_EQ(out.t, pose.t);
}

TEST(PerturbPose, MagnitudesAreExact) {
  for (int stream = 0; stream < 20; ++stream) {
    const RelativePose& pose = domain_b()[static_cast<std::size_t>(stream % 6)].pose;
    const PoseNoiseConfig noise{2.0, 1.0, 8};
    const RelativePose out = perturb_pose(pose, noise, static_cast<std::uint64_t>(stream));
    EXPECT_NEAR(rotation_angle(pose.R.transpose() * out.R) * 180.0 / M_PI, 2.0, 1e-9);
    const double cos_t = pose.t.normalized().dot(out.t.normalized());
    EXPECT_NEAR(std::acos(std::clamp(cos_t, -1.0, 1.0)) * 180.0 / M_PI, 1.0, 1e-6);
    EXPECT_NEAR(out.t.norm(), pose.t.norm(), 1e-12);
  }
}

TEST(PerturbPose, SeededAndStreamDependent) {
  const RelativePose& pose = domain_b()[0].pose;
  const PoseNoiseConfig noise{1.0, 1.0, 8};
  EXPECT_EQ(perturb_pose(pose, noise, 2).R, perturb_pose(pose, noise, 2).R);
  EXPECT_NE(perturb_pose(pose, noise, 2).R, perturb_pose(pose, noise, 3).R);
  EXPECT_THROW(perturb_pose(pose, {-1.0, 0.0, 0}, 0), Error);
}

TEST(Finetune, ZeroNoiseMatchesExactFundamentals) {
  const TrainConfig cfg = small_config();
  const MatcherParams p0 = init(cfg);
  const TrainResult posed = finetune_pose_supervised(domain_b(), p0, cfg, {0.0, 0.0, 77});
  const TrainResult exact = finetune_with_fundamentals(domain_b(), exact_fundamentals(domain_b()), p0, cfg);
  EXPECT_TRUE(posed.params == exact.params);
  EXPECT_FALSE(posed.params == p0);
}

TEST(Finetune, PoseNoiseChangesTheRun) {
  const TrainConfig cfg = small_config();
  const MatcherParams p0 = init(cfg);
  const TrainResult clean = finetune_pose_supervised(domain_b(), p0, cfg);
  const TrainResult noisy = finetune_pose_supervised(domain_b(), p0, cfg, {2.0, 2.0, 77});
  EXPECT_FALSE(clean.params == noisy.params);
}

TEST(Finetune, MissingFundamentalsAreSkipped) {
  auto fundamentals = exact_fundamentals(domain_b());
  fundamentals[1].reset();
  fundamentals[4].reset();
  const TrainResult r = finetune_with_fundamentals(domain_b(), fundamentals, init(small_config()), small_config());
  EXPECT_EQ(r.skipped_pairs, 2);
  EXPECT_EQ(r.log.front().pairs, 4);
}

TEST(Finetune, FullBatchLossIsNonIncreasing) {
  TrainConfig cfg = small_config();
  cfg.epochs = 8;
  cfg.batch_size = 2;
  cfg.lr = 0.02;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.train_tau = false;
  cfg.loss.fine_supervision_fraction = 1.0;
  const std::vector<RenderedPair> data = {domain_b()[0], domain_b()[1]};
  const TrainResult r = finetune_pose_supervised(data, init(cfg), cfg);
  ASSERT_EQ(r.log.size(), 8u);
  for (std::size_t k = 1; k < r.log.size(); ++k) {
    EXPECT_LE(r.log[k].total_loss, r.log[k - 1].total_loss + 1e-12) << "epoch " << k + 1;
  }
  EXPECT_LT(r.log.back().total_loss, r.log.front().total_loss);
}

TEST(Finetune, NaiveMaskTrainsDifferently) {
  TrainConfig cfg = small_config();
  const MatcherParams p0 = init(cfg);
  const TrainResult argmax = finetune_pose_supervised(domain_b(), p0, cfg);
  cfg.loss.naive_mask = true;
  const TrainResult naive = finetune_pose_supervised(domain_b(), p0, cfg);
  EXPECT_FALSE(argmax.params == naive.params);
  EXPECT_GT(naive.log.front().coarse_loss, argmax.log.front().coarse_loss);
}

TEST(Finetune, ReplayMixesSourcePairs) {
  TrainConfig cfg = small_config();
  cfg.replay_source = true;
  const MatcherParams p0 = init(cfg);
  EXPECT_THROW(finetune_pose_supervised(domain_b(), p0, cfg), Error);
  const TrainResult a = finetune_pose_supervised(domain_b(), p0, cfg, {}, &domain_a());
  const TrainResult b = finetune_pose_supervised(domain_b(), p0, cfg, {}, &domain_a());
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.log.front().pairs, 6);  // replayed pairs are not logged
  cfg.replay_source = false;
  EXPECT_FALSE(finetune_pose_supervised(domain_b(), p0, cfg).params == a.params);
}

TEST(Bootstrap, FewMatchesAreDropped) {
  const BootstrapConfig bcfg;
  const auto five = [](const RenderedPair& p, int) {
    auto m = oracle_matches(p);
    m.resize(5);
    return m;
  };
  const BootstrapResult r = bootstrap_fundamentals(domain_b(), init(small_config()), {}, bcfg, five);
  EXPECT_EQ(r.kept, 0);
  EXPECT_EQ(r.dropped_few_matches, 6);
  for (const auto& p : r.pairs) EXPECT_EQ(p.verdict, BootstrapVerdict::kTooFewMatches);
  for (const auto& f : r.fundamentals) EXPECT_FALSE(f.has_value());
}

TEST(Bootstrap, OracleMatchesGiveConsistentFundamentals) {
  std::vector<RenderedPair> data = domain_b();
  for (auto& p : data) {
    p.image1.setZero();  // the provider must be the only source of matches
  }
  const BootstrapResult r =
      bootstrap_fundamentals(data, init(small_config()), {}, {}, [](const RenderedPair& p, int) { return oracle_matches(p); });
  int audited = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!r.fundamentals[i]) continue;
    ++audited;
    std::vector<double> d;
    for (const auto& m : oracle_matches(data[i])) {
      d.push_back(std::sqrt(symmetric_epipolar_distance_sq(*r.fundamentals[i], m.x1, m.x2)));
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    EXPECT_LT(d[d.size() / 2], 0.1) << "pair " << i;  // pixels
  }
  EXPECT_GE(audited, 5);
}

TEST(Bootstrap, ReportCountsAndThresholds) {
  const TrainConfig cfg = small_config();
  const MatcherParams p = pretrain(domain_a(), init(cfg), cfg).params;
  BootstrapConfig bcfg;
  bcfg.min_matches = 10;
  bcfg.min_inliers = 8;
  MatcherConfig mc = cfg.matcher;
  mc.match_threshold = 0.0;
  const BootstrapResult r = bootstrap_fundamentals(domain_b(), p, mc, bcfg);
  EXPECT_EQ(r.kept + r.dropped_few_matches + r.dropped_few_inliers + r.dropped_failed, 6);
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const BootstrapPair& bp = r.pairs[i];
    EXPECT_EQ(bp.index, static_cast<int>(i));
    if (bp.verdict == BootstrapVerdict::kKept) {
      EXPECT_GE(bp.num_matches, bcfg.min_matches);
      EXPECT_GE(bp.inliers, bcfg.min_inliers);
      EXPECT_TRUE(r.fundamentals[i].has_value());
    }
  }
  const std::string csv = r.report_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Bootstrap, EmptyFilterResultThrows) {
  BootstrapConfig bcfg;
  bcfg.min_matches = 100000;
  bcfg.min_inliers = 12;
  try {
    bootstrap_finetune(domain_b(), init(small_config()), small_config(), bcfg);
    FAIL() << "expected EmptyDatasetAfterFilter";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyDatasetAfterFilter);
  }
}

TEST(Bootstrap, FinetuneIsDeterministic) {
  TrainConfig cfg = small_config();
  cfg.matcher.match_threshold = 0.0;
  BootstrapConfig bcfg;
  bcfg.min_matches = 10;
  bcfg.min_inliers = 8;
  const MatcherParams p0 = init(cfg);
  const BootstrapTrainResult a = bootstrap_finetune(domain_b(), p0, cfg, bcfg);
  const BootstrapTrainResult b = bootstrap_finetune(domain_b(), p0, cfg, bcfg);
  EXPECT_TRUE(a.train.params == b.train.params);
  EXPECT_EQ(a.bootstrap.kept, b.bootstrap.kept);
  EXPECT_EQ(a.train.skipped_pairs, 6 - a.bootstrap.kept);
}

TEST(Config, Validation) {
  TrainConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  BootstrapConfig b;
  b.min_inliers = b.min_matches + 1;
  EXPECT_THROW(b.validate(), Error);
  EXPECT_EQ(BootstrapConfig::full_resolution().min_matches, 100);
  EXPECT_EQ(BootstrapConfig::full_resolution().min_inliers, 20);
}

}  // namespace
}  // namespace epimatch

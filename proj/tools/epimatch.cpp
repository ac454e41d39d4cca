// epimatch command-line tool.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "epimatch/error.hpp"
#include "epimatch/gradcheck.hpp"
#include "epimatch/io.hpp"
#include "epimatch/metrics.hpp"
#include "epimatch/pairgen.hpp"
#include "epimatch/parallel.hpp"
#include "epimatch/pipeline.hpp"
#include "epimatch/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace epimatch;

namespace {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitData = 4,
  kExitNumeric = 5,
  kExitCheckFailed = 6,
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kIo:
    case ErrorCode::kFormat:
      return kExitIo;
    case ErrorCode::kNonFiniteGradient:
    case ErrorCode::kNonFiniteLoss:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

std::string_view exit_category(int code) {
  switch (code) {
    case kExitUsage: return "usage";
    case kExitIo: return "io";
    case kExitData: return "data";
    case kExitNumeric: return "numeric";
    case kExitCheckFailed: return "check";
    default: return "internal";
  }
}

// A check that ran to completion but did not pass.
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------- options

// Doubles keep a round-trip exact default in --help and in manifests.
CLI::Option* add_real(CLI::App* sub, const std::string& name, double& value, const std::string& desc = "") {
  return sub->add_option(name, value, desc)->default_str(format_double(value));
}

struct TrainOpts {
  std::string data, out, init, eval_data, replay_source;
  double lr = TrainConfig{}.lr;
  double weight_decay = TrainConfig{}.weight_decay;
  double momentum = TrainConfig{}.momentum;
  int batch_size = TrainConfig{}.batch_size;
  int epochs = TrainConfig{}.epochs;
  double tau_lr = TrainConfig{}.tau_lr;
  bool fixed_tau = false;
  double lambda = LossConfig{}.lambda;
  double theta = LossConfig{}.theta;
  double fine_fraction = LossConfig{}.fine_supervision_fraction;
  double fine_weight_scale = LossConfig{}.fine_weight_scale;
  double match_threshold = MatcherConfig{}.match_threshold;
  std::uint64_t seed = 0;
  // finetune
  double pose_noise_deg = 0.0;
  bool naive_mask = false;
  // bootstrap
  int min_matches = BootstrapConfig{}.min_matches;
  int min_inliers = BootstrapConfig{}.min_inliers;
  bool full_res_filter = false;
  double ransac_px = 1.0;
  int ransac_iterations = RansacConfig{}.iterations;
};

struct EvalOpts {
  std::string checkpoint, data, out, method = "epimatch";
  std::string preset = "indoor";
  std::optional<double> threshold;
  double match_threshold = MatcherConfig{}.match_threshold;
  double ransac_px = 1.0;
  int ransac_iterations = RansacConfig{}.iterations;
  std::uint64_t seed = 0;
  int overlays = 4;
  std::vector<int> pairs;  // match: subset of pair indices
};

struct State {
  std::string domain;
  int n_pairs = 100;
  int previews = 0;
  std::string out;
  std::uint64_t seed = 0;

  std::string poses, model = "euroc-room";
  double min_overlap = OverlapRange{}.min, max_overlap = OverlapRange{}.max;
  int samples = PairgenOptions{}.samples, stride = PairgenOptions{}.stride;

  TrainOpts train;
  EvalOpts eval;

  std::string matches;
  std::vector<double> K1, K2;

  int d_epi_instances = GradcheckOptions{}.d_epi_instances;
  int matcher_seeds = GradcheckOptions{}.matcher_seeds;
  bool sign_flip = false;

  std::string manifest;
  int threads = 1;
};

void add_seed(CLI::App* sub, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "Seed (falls back to EPIMATCH_SEED)")->envname("EPIMATCH_SEED");
}

void add_train_options(CLI::App* sub, TrainOpts& t, bool needs_init) {
  sub->add_option("--data", t.data, "Training dataset directory")->required()->check(CLI::ExistingDirectory);
  sub->add_option("--out", t.out, "Run directory")->required();
  auto* init = sub->add_option("--init", t.init, "Starting checkpoint")->check(CLI::ExistingFile);
  if (needs_init) init->required();
  sub->add_option("--eval-data", t.eval_data, "Dataset evaluated after every epoch")->check(CLI::ExistingDirectory);
  add_real(sub, "--lr", t.lr)->check(CLI::PositiveNumber);
  add_real(sub, "--weight-decay", t.weight_decay)->check(CLI::NonNegativeNumber);
  add_real(sub, "--momentum", t.momentum)->check(CLI::Range(0.0, 0.999999));
  sub->add_option("--batch-size", t.batch_size)->check(CLI::PositiveNumber);
  sub->add_option("--epochs", t.epochs)->check(CLI::NonNegativeNumber);
  add_real(sub, "--tau-lr", t.tau_lr)->check(CLI::NonNegativeNumber);
  sub->add_flag("--fixed-tau", t.fixed_tau, "Keep the softmax temperature fixed");
  add_real(sub, "--lambda", t.lambda, "Weight of the fine loss")->check(CLI::Range(0.0, 1.0));
  add_real(sub, "--theta", t.theta, "Epipolar line-set distance threshold in cells")->check(CLI::PositiveNumber);
  add_real(sub, "--fine-fraction", t.fine_fraction, "Share of supervised rows refined per pair")
      ->check(CLI::Range(0.0, 1.0));
  add_real(sub, "--fine-weight-scale", t.fine_weight_scale)->check(CLI::PositiveNumber);
  add_real(sub, "--match-threshold", t.match_threshold, "Coarse confidence threshold for predicted matches")
      ->check(CLI::Range(0.0, 1.0));
  add_seed(sub, t.seed);
}

// ---------------------------------------------------------------- manifest

bool is_flag(const CLI::Option* o) { return o->get_expected_min() == 0; }

bool skip_option(const CLI::Option* o) {
  const std::string name = o->get_name();
  return name == "--help" || name == "--config" || name == "--version";
}

json resolved_options(const CLI::App* sub) {
  json out = json::object();
  for (const CLI::Option* o : sub->get_options()) {
    if (skip_option(o)) continue;
    const std::string key = o->get_single_name();
    if (is_flag(o)) {
      out[key] = o->count() > 0 && o->as<bool>();
      continue;
    }
    std::vector<std::string> values = o->results();
    // Unset list options have no default to replay.
    if (values.empty() && o->get_items_expected_max() == 1 && !o->get_default_str().empty()) {
      values = {o->get_default_str()};
    }
    if (values.empty()) continue;
    out[key] = values.size() == 1 && o->get_expected_max() == 1 ? json(values.front()) : json(values);
  }
  return out;
}

fs::path manifest_path(const fs::path& out, bool is_dir) {
  return is_dir ? out / "manifest.json" : fs::path(out.string() + ".manifest.json");
}

void write_manifest(const CLI::App& app, const CLI::App* sub, const fs::path& out, bool is_dir, int threads) {
  json m;
  m["command"] = sub->get_name();
  const CLI::Option* cfg = app.get_config_ptr();
  m["config_file"] = cfg != nullptr && cfg->count() > 0 ? json(cfg->as<std::string>()) : json(nullptr);
  m["options"] = resolved_options(sub);
  json seeds = json::object();
  if (m["options"].contains("seed")) seeds["seed"] = m["options"]["seed"];
  m["seeds"] = seeds;
  m["version"] = EPIMATCH_VERSION;
  m["output"] = out.string();
  m["working_dir"] = fs::current_path().string();
  m["threads"] = threads;
  if (is_dir) fs::create_directories(out);
  else if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text_file(manifest_path(out, is_dir), m.dump(2) + "\n");
}

std::vector<std::string> argv_from_manifest(const json& m, const std::optional<std::string>& out) {
  std::vector<std::string> args = {"epimatch", m.at("command").get<std::string>()};
  for (const auto& [key, value] : m.at("options").items()) {
    const std::string flag = (key.size() == 1 ? "-" : "--") + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
      continue;
    }
    if (key == "out" && out) {
      args.insert(args.end(), {flag, *out});
      continue;
    }
    if (value.is_array()) {
      args.push_back(flag);
      for (const auto& v : value) args.push_back(v.get<std::string>());
    } else {
      args.insert(args.end(), {flag, value.get<std::string>()});
    }
  }
  return args;
}

// ---------------------------------------------------------------- helpers

std::vector<RenderedPair> load_dataset(const std::string& dir) {
  auto data = read_dataset(dir);
  EPIMATCH_REQUIRE(!data.empty(), ErrorCode::kEmptyInput, "dataset " + dir + " has no pairs");
  return data;
}

TrainConfig train_config(const TrainOpts& t) {
  TrainConfig cfg;
  cfg.lr = t.lr;
  cfg.weight_decay = t.weight_decay;
  cfg.momentum = t.momentum;
  cfg.batch_size = t.batch_size;
  cfg.epochs = t.epochs;
  cfg.train_tau = !t.fixed_tau;
  cfg.tau_lr = t.tau_lr;
  cfg.loss.lambda = t.lambda;
  cfg.loss.theta = t.theta;
  cfg.loss.fine_supervision_fraction = t.fine_fraction;
  cfg.loss.fine_weight_scale = t.fine_weight_scale;
  cfg.loss.naive_mask = t.naive_mask;
  cfg.matcher.match_threshold = t.match_threshold;
  cfg.seed = t.seed;
  cfg.replay_source = !t.replay_source.empty();
  cfg.validate();
  return cfg;
}

EvalConfig eval_config(double match_threshold, double precision_threshold, double ransac_px, int iterations,
                       std::uint64_t seed) {
  EvalConfig cfg;
  cfg.matcher.match_threshold = match_threshold;
  cfg.precision_threshold = precision_threshold;
  cfg.ransac_threshold_px = ransac_px;
  cfg.ransac.iterations = iterations;
  cfg.ransac.seed = seed;
  return cfg;
}

double precision_threshold(const EvalOpts& e) {
  if (e.threshold) return *e.threshold;
  return e.preset == "outdoor" ? kOutdoorPrecisionThreshold : kIndoorPrecisionThreshold;
}

std::string pair_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

void write_overlay(const fs::path& path, const RenderedPair& pair, const std::vector<Correspondence>& matches,
                   double threshold) {
  std::vector<OverlayLine> lines;
  lines.reserve(matches.size());
  for (const auto& m : matches) {
    const bool good = pair.F_gt.has_value() &&
                      matching_precision(std::span(&m, 1), *pair.F_gt, pair.cam1.intrinsics, pair.cam2.intrinsics,
                                         threshold) > 0.0;
    lines.push_back({m.x1, m.x2, good});
  }
  write_match_overlay(path, pair.image1, pair.image2, lines);
}

class Progress {
 public:
  Progress(std::string name, const std::vector<RenderedPair>* eval_set, EvalConfig cfg)
      : name_(std::move(name)), eval_set_(eval_set), cfg_(std::move(cfg)) {}

  EpochCallback callback() {
    return [this](EpochLog& log, const MatcherParams& params) {
      if (eval_set_ != nullptr) log.eval = evaluate(params, *eval_set_, cfg_);
      std::cerr << name_ << " epoch " << log.epoch << ": coarse " << log.coarse_loss << " fine " << log.fine_loss
                << " total " << log.total_loss;
      if (log.eval) std::cerr << " | P " << log.eval->precision << " AUC@20 " << log.eval->auc20;
      std::cerr << '\n';
    };
  }

 private:
  std::string name_;
  const std::vector<RenderedPair>* eval_set_;
  EvalConfig cfg_;
};

struct TrainSetup {
  std::vector<RenderedPair> data;
  std::optional<std::vector<RenderedPair>> eval_set;
  std::optional<std::vector<RenderedPair>> source;
  TrainConfig cfg;
  MatcherParams init;
  std::unique_ptr<Progress> progress;
};

TrainSetup prepare_training(const std::string& name, const TrainOpts& t) {
  TrainSetup s;
  s.cfg = train_config(t);
  s.data = load_dataset(t.data);
  if (!t.eval_data.empty()) s.eval_set = load_dataset(t.eval_data);
  if (!t.replay_source.empty()) s.source = load_dataset(t.replay_source);
  s.init = t.init.empty() ? MatcherParams::init(s.cfg.matcher, t.seed) : load_checkpoint(t.init);
  s.progress = std::make_unique<Progress>(
      name, s.eval_set ? &*s.eval_set : nullptr,
      eval_config(t.match_threshold, kIndoorPrecisionThreshold, t.ransac_px, t.ransac_iterations, t.seed));
  return s;
}

void save_run(const fs::path& out, const TrainResult& r) {
  save_checkpoint(out / "model.ckpt", r.params);
  write_text_file(out / "log.csv", epoch_log_csv(r.log));
  if (r.skipped_pairs > 0) std::cerr << "skipped " << r.skipped_pairs << " pairs without supervision\n";
}

// ---------------------------------------------------------------- commands

void run_synth(const State& s) {
  const SceneSpec spec = make_domain(s.domain, s.seed);
  std::vector<RenderedPair> pairs(static_cast<std::size_t>(s.n_pairs));
  parallel_for(s.n_pairs, [&](int i) {
    try {
      pairs[static_cast<std::size_t>(i)] = sample_pair(spec, i);
    } catch (const Error& e) {
      throw Error(e.code(), "pair " + std::to_string(i) + ": " + e.what());
    }
  });
  write_dataset(s.out, s.domain, s.seed, pairs);
  for (int i = 0; i < std::min(s.previews, s.n_pairs); ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    write_match_overlay(fs::path(s.out) / "previews" / (pair_stem(i) + ".png"), p.image1, p.image2, {});
  }
  std::cout << "wrote " << s.n_pairs << " pairs of domain " << s.domain << " to " << s.out << '\n';
}

void run_pairs(const State& s) {
  const std::vector<PoseRecord> poses = read_pose_file(s.poses);
  OverlapRange range{s.min_overlap, s.max_overlap};
  PairgenOptions opt;
  opt.samples = s.samples;
  opt.stride = s.stride;
  const auto pairs = generate_pairs(poses, model_preset(s.model), range, opt);
  std::ostringstream text;
  text.precision(6);
  text << std::fixed;
  for (const auto& c : pairs) {
    text << poses[static_cast<std::size_t>(c.i)].id << ' ' << poses[static_cast<std::size_t>(c.j)].id << ' '
         << c.overlap << '\n';
  }
  write_text_file(s.out, text.str());
  std::cout << "wrote " << pairs.size() << " pairs to " << s.out << '\n';
}

void run_pretrain(const State& s) {
  TrainSetup t = prepare_training("pretrain", s.train);
  const TrainResult r = pretrain(t.data, t.init, t.cfg, t.progress->callback());
  save_run(s.train.out, r);
}

void run_finetune(const State& s) {
  TrainSetup t = prepare_training("finetune", s.train);
  PoseNoiseConfig noise{s.train.pose_noise_deg, s.train.pose_noise_deg, s.train.seed};
  noise.validate();
  const TrainResult r = finetune_pose_supervised(t.data, t.init, t.cfg, noise, t.source ? &*t.source : nullptr,
                                                 t.progress->callback());
  save_run(s.train.out, r);
}

void run_bootstrap(const State& s) {
  TrainSetup t = prepare_training("bootstrap", s.train);
  BootstrapConfig b = s.train.full_res_filter ? BootstrapConfig::full_resolution() : BootstrapConfig{};
  if (!s.train.full_res_filter) {
    b.min_matches = s.train.min_matches;
    b.min_inliers = s.train.min_inliers;
  }
  b.ransac_threshold_px = s.train.ransac_px;
  b.ransac.iterations = s.train.ransac_iterations;
  b.ransac.seed = s.train.seed;
  const BootstrapTrainResult r =
      bootstrap_finetune(t.data, t.init, t.cfg, b, t.source ? &*t.source : nullptr, t.progress->callback());
  write_text_file(fs::path(s.train.out) / "bootstrap.csv", r.bootstrap.report_csv());
  std::cerr << "bootstrap kept " << r.bootstrap.kept << " of " << t.data.size() << " pairs\n";
  save_run(s.train.out, r.train);
}

std::vector<int> selected_pairs(const std::vector<int>& requested, std::size_t n) {
  std::vector<int> out;
  if (requested.empty()) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(i));
    return out;
  }
  for (int i : requested) {
    EPIMATCH_REQUIRE(i >= 0 && static_cast<std::size_t>(i) < n, ErrorCode::kInvalidArgument,
                     "pair index " + std::to_string(i) + " out of range");
    out.push_back(i);
  }
  return out;
}

void run_match(const State& s) {
  const EvalOpts& e = s.eval;
  const MatcherParams params = load_checkpoint(e.checkpoint);
  const auto data = load_dataset(e.data);
  MatcherConfig mc;
  mc.match_threshold = e.match_threshold;
  const std::vector<int> idx = selected_pairs(e.pairs, data.size());
  std::vector<std::vector<Correspondence>> matches(idx.size());
  parallel_for(static_cast<int>(idx.size()), [&](int k) {
    matches[static_cast<std::size_t>(k)] = predict_matches(data[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])], params, mc);
  });
  const fs::path out(e.out);
  const double thr = precision_threshold(e);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::string stem = pair_stem(idx[k]);
    write_match_file(out / "matches" / (stem + ".txt"), matches[k]);
    if (static_cast<int>(k) < e.overlays) {
      write_overlay(out / "overlays" / (stem + ".png"), data[static_cast<std::size_t>(idx[k])], matches[k], thr);
    }
    std::cout << stem << ' ' << matches[k].size() << " matches\n";
  }
}

CameraIntrinsics intrinsics_from(const std::vector<double>& v) { return {v[0], v[1], v[2], v[3]}; }

json matrix_json(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

void run_pose(const State& s) {
  const auto matches = read_match_file(s.matches);
  const CameraIntrinsics K1 = intrinsics_from(s.K1);
  const CameraIntrinsics K2 = s.K2.empty() ? K1 : intrinsics_from(s.K2);
  RansacConfig rc;
  rc.iterations = s.eval.ransac_iterations;
  rc.seed = s.seed;
  const double f = 0.5 * (K1.fx + K1.fy);
  rc.inlier_threshold = 2.0 * std::pow(s.eval.ransac_px / f, 2);
  const PoseEstimate est = estimate_relative_pose(matches, K1, K2, rc);
  json r;
  r["num_input_matches"] = est.ransac.num_input_matches;
  r["inlier_count"] = est.ransac.inlier_count;
  r["no_consensus"] = est.ransac.no_consensus;
  r["best_iteration"] = est.ransac.best_iteration;
  json inliers = json::array();
  for (std::size_t i = 0; i < est.ransac.inlier_mask.size(); ++i) {
    if (est.ransac.inlier_mask[i]) inliers.push_back(i);
  }
  r["inliers"] = inliers;
  r["F"] = matrix_json(est.ransac.F.m);
  r["R"] = matrix_json(est.pose.R);
  r["t"] = {est.pose.t.x(), est.pose.t.y(), est.pose.t.z()};
  write_text_file(s.out, r.dump(2) + "\n");
  std::cout << "inliers " << est.ransac.inlier_count << " / " << est.ransac.num_input_matches << '\n';
}

void run_eval(const State& s) {
  const EvalOpts& e = s.eval;
  const MatcherParams params = load_checkpoint(e.checkpoint);
  const auto data = load_dataset(e.data);
  const EvalConfig cfg = eval_config(e.match_threshold, precision_threshold(e), e.ransac_px, e.ransac_iterations, e.seed);
  const EvalReport report = evaluate(params, data, cfg);
  const fs::path out(e.out);
  write_text_file(out / "report.json", report.to_json() + "\n");
  const std::string table = report.to_table(e.method);
  write_text_file(out / "report.txt", table);
  for (int i = 0; i < std::min<int>(e.overlays, static_cast<int>(data.size())); ++i) {
    const auto& pair = data[static_cast<std::size_t>(i)];
    write_overlay(out / "overlays" / (pair_stem(i) + ".png"), pair, predict_matches(pair, params, cfg.matcher),
                  cfg.precision_threshold);
  }
  std::cout << table;
}

void run_gradcheck(const State& s) {
  GradcheckOptions opt;
  opt.seed = s.seed;
  opt.d_epi_instances = s.d_epi_instances;
  opt.matcher_seeds = s.matcher_seeds;
  opt.inject_sign_flip = s.sign_flip;
  const GradcheckReport report = run_gradcheck(opt);
  json j;
  j["pass"] = report.pass;
  j["components"] = json::array();
  for (const auto& c : report.components) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " instances=" << c.instances
              << " max_rel_error=" << format_double(c.max_rel_error) << " tol=" << c.tolerance << '\n';
    j["components"].push_back({{"name", c.name},
                               {"instances", c.instances},
                               {"max_rel_error", c.max_rel_error},
                               {"tolerance", c.tolerance},
                               {"pass", c.pass}});
  }
  write_text_file(s.out, j.dump(2) + "\n");
  if (!report.pass) throw CheckFailed("gradient check failed");
}

// ---------------------------------------------------------------- app

struct Command {
  CLI::App* sub;
  std::function<void(const State&)> run;
  std::function<std::string(const State&)> out;
  bool out_is_dir;
};

struct Cli {
  CLI::App app{"Detector-free matcher trained with epipolar supervision"};
  State s;
  std::vector<Command> commands;
  CLI::App* replay = nullptr;
  std::optional<std::string> replay_out;
};

std::unique_ptr<Cli> build_cli() {
  auto cli = std::make_unique<Cli>();
  CLI::App& app = cli->app;
  State& s = cli->s;
  app.set_version_flag("--version", EPIMATCH_VERSION);
  app.set_config("--config", "", "INI file; [subcommand] sections, command-line flags take precedence");
  app.option_defaults()->always_capture_default();
  app.add_option("--threads", s.threads, "Worker cap (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.require_subcommand(1);
  app.fallthrough();

  auto add = [&](CLI::App* sub, std::function<void(const State&)> run, std::function<std::string(const State&)> out,
                 bool is_dir) { cli->commands.push_back({sub, std::move(run), std::move(out), is_dir}); };

  {
    auto* sub = app.add_subcommand("synth", "Render a synthetic domain dataset");
    sub->add_option("--domain", s.domain, "Domain name")->required()->check(CLI::IsMember({"A", "B"}));
    sub->add_option("--pairs", s.n_pairs, "Number of pairs")->check(CLI::PositiveNumber);
    sub->add_option("--previews", s.previews, "Side-by-side PNGs for the first N pairs")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", s.out, "Dataset directory")->required();
    add_seed(sub, s.seed);
    add(sub, run_synth, [](const State& st) { return st.out; }, true);
  }
  {
    auto* sub = app.add_subcommand("pairs", "Mine image pairs from camera poses");
    sub->add_option("--poses", s.poses, "Pose file")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", s.model, "Pseudo-depth preset")
        ->check(CLI::IsMember({"euroc-machine", "euroc-room", "sf-street"}));
    add_real(sub, "--min-overlap", s.min_overlap)->check(CLI::Range(0.0, 1.0));
    add_real(sub, "--max-overlap", s.max_overlap)->check(CLI::Range(0.0, 1.0));
    sub->add_option("--samples", s.samples, "Sample grid size per image side")->check(CLI::PositiveNumber);
    sub->add_option("--stride", s.stride, "Use every stride-th pose")->check(CLI::PositiveNumber);
    sub->add_option("--out", s.out, "Output pair list")->required();
    add(sub, run_pairs, [](const State& st) { return st.out; }, false);
  }
  {
    auto* sub = app.add_subcommand("pretrain", "Supervised pretraining with ground-truth correspondences");
    add_train_options(sub, s.train, false);
    add(sub, run_pretrain, [](const State& st) { return st.train.out; }, true);
  }
  {
    auto* sub = app.add_subcommand("finetune", "Epipolar finetuning from known camera poses");
    add_train_options(sub, s.train, true);
    add_real(sub, "--pose-noise-deg", s.train.pose_noise_deg, "Perturb rotation and translation direction")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--naive-mask", s.train.naive_mask, "Supervise every cell pair near the epipolar line");
    sub->add_option("--replay-source", s.train.replay_source, "Source dataset mixed into every batch")
        ->check(CLI::ExistingDirectory);
    add(sub, run_finetune, [](const State& st) { return st.train.out; }, true);
  }
  {
    auto* sub = app.add_subcommand("bootstrap", "Epipolar finetuning from self-estimated fundamental matrices");
    add_train_options(sub, s.train, true);
    sub->add_flag("--naive-mask", s.train.naive_mask, "Supervise every cell pair near the epipolar line");
    sub->add_option("--min-matches", s.train.min_matches)->check(CLI::NonNegativeNumber);
    sub->add_option("--min-inliers", s.train.min_inliers)->check(CLI::NonNegativeNumber);
    sub->add_flag("--full-res-filter", s.train.full_res_filter, "Full-resolution filter thresholds (100 matches, 20 inliers)");
    add_real(sub, "--ransac-px", s.train.ransac_px, "RANSAC inlier threshold in pixels")->check(CLI::PositiveNumber);
    sub->add_option("--ransac-iterations", s.train.ransac_iterations)->check(CLI::PositiveNumber);
    sub->add_option("--replay-source", s.train.replay_source, "Source dataset mixed into every batch")
        ->check(CLI::ExistingDirectory);
    add(sub, run_bootstrap, [](const State& st) { return st.train.out; }, true);
  }
  auto add_eval_common = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", s.eval.checkpoint)->required();
    sub->add_option("--data", s.eval.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    sub->add_option("--out", s.eval.out, "Output directory")->required();
    add_real(sub, "--match-threshold", s.eval.match_threshold)->check(CLI::Range(0.0, 1.0));
    sub->add_option("--preset", s.eval.preset, "Precision threshold preset (indoor 5e-4, outdoor 1e-4)")
        ->check(CLI::IsMember({"indoor", "outdoor"}));
    sub->add_option("--threshold", s.eval.threshold, "Precision threshold, overrides --preset")
        ->check(CLI::PositiveNumber);
    sub->add_option("--overlays", s.eval.overlays, "Overlay PNGs for the first N pairs")->check(CLI::NonNegativeNumber);
  };
  {
    auto* sub = app.add_subcommand("match", "Predict matches with a checkpoint");
    add_eval_common(sub);
    sub->add_option("--pair", s.eval.pairs, "Pair index (repeatable; default all)");
    add(sub, run_match, [](const State& st) { return st.eval.out; }, true);
  }
  {
    auto* sub = app.add_subcommand("pose", "Relative pose from a match file");
    sub->add_option("--matches", s.matches, "Match file")->required()->check(CLI::ExistingFile);
    sub->add_option("--K1", s.K1, "fx fy cx cy of camera 1")->required()->expected(4);
    sub->add_option("--K2", s.K2, "fx fy cx cy of camera 2 (default K1)")->expected(4);
    add_real(sub, "--ransac-px", s.eval.ransac_px)->check(CLI::PositiveNumber);
    sub->add_option("--ransac-iterations", s.eval.ransac_iterations)->check(CLI::PositiveNumber);
    sub->add_option("--out", s.out, "Report JSON")->required();
    add_seed(sub, s.seed);
    add(sub, run_pose, [](const State& st) { return st.out; }, false);
  }
  {
    auto* sub = app.add_subcommand("eval", "Pose AUC and matching precision of a checkpoint");
    add_eval_common(sub);
    sub->add_option("--method", s.eval.method, "Row label in the report table");
    add_real(sub, "--ransac-px", s.eval.ransac_px)->check(CLI::PositiveNumber);
    sub->add_option("--ransac-iterations", s.eval.ransac_iterations)->check(CLI::PositiveNumber);
    add_seed(sub, s.eval.seed);
    add(sub, run_eval, [](const State& st) { return st.eval.out; }, true);
  }
  {
    auto* sub = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    sub->add_option("--d-epi-instances", s.d_epi_instances)->check(CLI::PositiveNumber);
    sub->add_option("--matcher-seeds", s.matcher_seeds)->check(CLI::PositiveNumber);
    sub->add_flag("--inject-sign-flip", s.sign_flip)->group("");
    sub->add_option("--out", s.out, "Report JSON")->capture_default_str();
    s.out = "gradcheck.json";
    add_seed(sub, s.seed);
    add(sub, run_gradcheck, [](const State& st) { return st.out; }, false);
  }
  {
    cli->replay = app.add_subcommand("replay", "Rerun a command from its manifest");
    cli->replay->add_option("manifest", s.manifest, "manifest.json")->required()->check(CLI::ExistingFile);
    cli->replay->add_option("--out", cli->replay_out, "Write outputs here instead");
  }
  return cli;
}

int run(int argc, const char* const* argv);

int execute(Cli& cli) {
  set_num_threads(cli.s.threads);
  if (cli.replay->parsed()) {
    const json m = json::parse(read_text_file(cli.s.manifest));
    // Relative paths in the manifest are relative to the original working directory.
    std::optional<std::string> out = cli.replay_out;
    if (out) out = fs::absolute(*out).string();
    if (m.contains("working_dir")) fs::current_path(m["working_dir"].get<std::string>());
    std::vector<std::string> args = argv_from_manifest(m, out);
    args.insert(args.begin() + 1, {"--threads", std::to_string(cli.s.threads)});
    std::vector<const char*> ptrs;
    for (const auto& a : args) ptrs.push_back(a.c_str());
    return run(static_cast<int>(ptrs.size()), ptrs.data());
  }
  for (const Command& c : cli.commands) {
    if (!c.sub->parsed()) continue;
    write_manifest(cli.app, c.sub, c.out(cli.s), c.out_is_dir, cli.s.threads);
    c.run(cli.s);
    return kExitOk;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::unique_ptr<Cli> cli = build_cli();
  try {
    cli->app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli->app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  int code = kExitInternal;
  std::string message;
  try {
    return execute(*cli);
  } catch (const Error& e) {
    code = exit_code_for(e.code());
    message = e.what();
  } catch (const CheckFailed& e) {
    code = kExitCheckFailed;
    message = e.what();
  } catch (const std::exception& e) {
    message = e.what();
  }
  std::cerr << "epimatch: " << exit_category(code) << " error: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }

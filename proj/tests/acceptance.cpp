// Acceptance runner: one PASS/FAIL line per criterion, thresholds pinned below.
// Usage: acceptance [criterion ...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "point_mass.hpp"
#include "views.hpp"
#include "vical/eval.hpp"
#include "vical/train.hpp"

using namespace vical;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr int kBruteForceEpisodes = 1000;
constexpr int kFuzzUpdates = 100000;
constexpr double kMdpSeconds = 60;
// Criterion 2
constexpr double kNoiselessIntrinsicPct = 0.1;
constexpr double kHandEyeTol = 1e-6;
constexpr double kJacobianRelTol = 1e-4;
constexpr double kNoiselessSeconds = 120;
// Criterion 3
constexpr int kNoisySeeds = 20;
constexpr double kNoisyIntrinsicPct = 2.0;
constexpr double kNoisyExtrinsicPct = 5.0;
constexpr double kNoisySeconds = 600;
// Criterion 4
constexpr double kSmallNetGradTol = 1e-3;
constexpr double kMlpGradTol = 1e-4;
constexpr int kPointMassSteps = 20000;
constexpr double kPointMassImprovement = 5.0;
constexpr double kRlSeconds = 300;
// Criterion 5
constexpr int kTrainSteps = 15000;
constexpr double kTerminalRate = 0.8;
constexpr int kEvalRigs = 20;
constexpr int kSmokeSteps = 1500;
constexpr double kSmokeSeconds = 900;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome mdp_fidelity() {
  const auto t0 = Clock::now();
  const int mismatches = testutil::brute_force_mismatches(kBruteForceEpisodes, 1);
  const int violations = testutil::monotonicity_violations(kFuzzUpdates, 2);

  // Hand-computed step and terminal rewards.
  StateVector a = StateVector::Zero(), b = StateVector::Zero();
  b[0] = 0.1, b[9] = 0.15, b[17] = 0.05;
  const Pose p = Pose::identity(), q(Vec3(0.1, 0, 0), euler_to_rot(0.2, 0, 0));
  Eigen::VectorXd truth(2), est(2);
  truth << 2.0, 0.0;
  est << 1.5, 0.0;
  const double r30 = terminal_reward(truth, est, 10, 5);
  est << 0.0, 0.0;
  const double r15 = terminal_reward(truth, est, 10, 5);
  const bool hand = std::abs(step_reward(a, b, p, q, 1.0, 0.5) - 0.1) < 1e-12 &&
                    step_reward(a, a, p, p, 1.0, 0.5) == 0.0 && std::abs(r30 - 30.0) < 1e-12 &&
                    std::abs(r15 - 15.0) < 1e-12 && terminal_reward(truth, truth, 10, 5) == 100.0;
  const double secs = seconds_since(t0);
  return {mismatches == 0 && violations == 0 && hand && secs < kMdpSeconds,
          fmt("brute-force mismatches %d/%d, monotone/bound violations %d over %d updates, hand cases %s, %.1f s",
              mismatches, kBruteForceEpisodes, violations, kFuzzUpdates, hand ? "ok" : "wrong", secs)};
}

Outcome solver_noiseless() {
  const auto t0 = Clock::now();
  double worst_intr = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RigConfig rig = testutil::centered_rig(seed);
    Rng rng(seed + 50);
    const auto views = testutil::random_views(rig, 20, rng);
    const CalibResult r = calibrate_intrinsics(testutil::detections(views), rig.board, 640, 480);
    worst_intr = std::max(worst_intr, percent_error(rig.intrinsics.params(), r.intrinsics.params()));
  }
  double worst_t = 0.0, worst_r = 0.0;
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose T_cam_imu = testutil::random_pose(rng, 0.2);
    std::vector<Pose> cams;
    for (int i = 0; i < 8; ++i) cams.push_back(testutil::random_pose(rng, 0.5, 0.6));
    std::vector<Pose> A, B;
    testutil::motions_from_trajectory(cams, T_cam_imu, A, B);
    const Pose X = hand_eye_solve(A, B), expected = inverse(T_cam_imu);
    worst_t = std::max(worst_t, (X.position - expected.position).norm());
    worst_r = std::max(worst_r, testutil::pose_rot_err(X, expected));
  }
  double worst_j = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RigConfig rig = testutil::centered_rig(seed);
    rig.intrinsics.p1 = 0.001 * static_cast<double>(seed % 3);
    rig.intrinsics.p2 = -0.0007 * static_cast<double>(seed % 2);
    Rng vr(seed + 7);
    worst_j = std::max(worst_j, testutil::reprojection_jacobian_error(rig, testutil::random_views(rig, 2, vr)));
  }
  const double secs = seconds_since(t0);
  return {worst_intr < kNoiselessIntrinsicPct && worst_t < kHandEyeTol && worst_r < kHandEyeTol &&
              worst_j < kJacobianRelTol && secs < kNoiselessSeconds,
          fmt("intrinsics worst %.2e%%, hand-eye worst %.1e m / %.1e rad, Jacobian worst rel %.1e, %.1f s",
              worst_intr, worst_t, worst_r, worst_j, secs)};
}

Outcome solver_noisy() {
  const auto t0 = Clock::now();
  Config cfg;
  cfg.eval.rigs = kNoisySeeds;
  cfg.eval.policies = {"handcrafted_long"};
  cfg.eval.tasks = {"intrinsic", "extrinsic_known_k"};
  const EvalReport rep = evaluate(cfg, nullptr);
  const EvalSummary &in = rep.summary("handcrafted_long", Task::Intrinsic);
  const EvalSummary &ex = rep.summary("handcrafted_long", Task::ExtrinsicKnownK);
  const double secs = seconds_since(t0);
  return {in.runs == kNoisySeeds && ex.runs == kNoisySeeds && in.error_mean < kNoisyIntrinsicPct &&
              ex.error_mean < kNoisyExtrinsicPct && secs < kNoisySeconds,
          fmt("sigma_px %.2f, %d rigs: intrinsic mean %.3f%% (std %.3f), extrinsic mean %.3f%% (std %.3f), %.1f s",
              cfg.sim.pixel_noise, in.runs, in.error_mean, in.error_std, ex.error_mean, ex.error_std, secs)};
}

Outcome rl_correctness() {
  const auto t0 = Clock::now();
  double sac = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) sac = std::max(sac, testutil::sac_worst_fd_error(seed));
  double small = 0.0;
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp<double> net({6, 8, 7, 3}, rng);
    const auto X = testutil::random_matrix(6, 5, rng), C = testutil::random_matrix(3, 5, rng);
    small = std::max(small, testutil::max_fd_error(net, X, C));
  }
  Rng big_rng(6);
  Mlp<double> big({24, 256, 256, 12}, big_rng);
  const auto X = testutil::random_matrix(24, 3, big_rng), C = testutil::random_matrix(12, 3, big_rng);
  const double mlp = std::max(small, testutil::max_fd_error(big, X, C, 1e-5, 3));
  const auto pm = testutil::train_point_mass(kPointMassSteps, 1);
  const double secs = seconds_since(t0);
  return {sac < kSmallNetGradTol && mlp < kMlpGradTol && pm.improvement() >= kPointMassImprovement &&
              secs < kRlSeconds,
          fmt("SAC loss grads worst rel %.1e, MLP backward worst rel %.1e, point mass return %.2f -> %.2f (%.1fx), %.1f s",
              sac, mlp, pm.untrained, pm.trained, pm.improvement(), secs)};
}

/// Least-squares slope of y against its index.
double slope(const std::vector<double> &y) {
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x, sy += y[i], sxx += x * x, sxy += x * y[i];
  }
  const double d = n * sxx - sx * sx;
  return d > 0 ? (n * sxy - sx * sy) / d : 0.0;
}

Outcome learning_signal() {
  // Smoke variant: short run, terminal-rate curve must trend upwards.
  auto t0 = Clock::now();
  Config smoke;
  smoke.train.steps = kSmokeSteps;
  Trainer s(smoke);
  s.train(smoke.train.steps);
  std::vector<double> curve;
  for (const EpisodeLog &e : s.log()) curve.push_back(e.terminal_rate);
  const double smoke_secs = seconds_since(t0);
  const double smoke_slope = slope(curve);

  t0 = Clock::now();
  Config cfg;
  cfg.train.steps = kTrainSteps;
  Trainer t(cfg);
  t.train(cfg.train.steps);
  const double rate = t.terminal_rate(50);
  const double train_secs = seconds_since(t0);

  cfg.eval.rigs = kEvalRigs;
  cfg.eval.policies = {"learned", "random_moving"};
  cfg.eval.tasks = {"joint"};
  const EvalReport rep = evaluate(cfg, &t.agent());
  const EvalSummary &l = rep.summary("learned", Task::Joint);
  const EvalSummary &r = rep.summary("random_moving", Task::Joint);

  const bool pass = smoke_secs < kSmokeSeconds && smoke_slope > 0.0 && t.env_steps() >= kTrainSteps &&
                    rate >= kTerminalRate && l.error_mean < r.error_mean && l.path_mean < r.path_mean;
  return {pass, fmt("smoke %d steps %.0f s slope %+.2e/episode (final rate %.2f); %lld steps %.0f s, "
                    "last-50 terminal rate %.2f; joint error learned %.2f%% vs random %.2f%%, "
                    "path %.2f m vs %.2f m",
                    kSmokeSteps, smoke_secs, smoke_slope, curve.empty() ? 0.0 : curve.back(),
                    static_cast<long long>(t.env_steps()), train_secs, rate, l.error_mean, r.error_mean,
                    l.path_mean, r.path_mean)};
}

// --- determinism -------------------------------------------------------------

std::string slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// CSV text with the named columns removed.
std::string drop_columns(const std::string &csv, const std::set<std::string> &names) {
  std::istringstream is(csv);
  std::string line, out;
  std::vector<bool> keep;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (keep.empty()) {
      for (const auto &c : cells) keep.push_back(!names.count(c));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i >= keep.size() || keep[i]) out += cells[i] + ",";
    }
    out += "\n";
  }
  return out;
}

std::string json_without(const fs::path &p, const std::vector<std::string> &keys) {
  nlohmann::json j = nlohmann::json::parse(slurp(p));
  for (const auto &k : keys) j.erase(k);
  return j.dump();
}

int run_cli(const std::string &args) {
  const std::string cmd = std::string("\"") + VICAL_CLI + "\" -q " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "vical_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg_path = root / "cfg.json";
  std::ofstream(cfg_path) << R"({"train": {"warmup": 200, "checkpoint_every": 300},
    "sac": {"hidden": 32, "batch": 64}, "eval": {"rigs": 2}})";
  const std::string cfg = " --config " + cfg_path.string();
  std::vector<std::string> failures;
  auto check = [&](const std::string &what, bool ok) {
    if (!ok) failures.push_back(what);
  };

  for (const char *run : {"a", "b"}) {
    const fs::path d = root / run;
    check("train exit", run_cli("train" + cfg + " --seed 4 --steps 600 --out " + (d / "train").string()) == 0);
    const std::string ck = (d / "train" / "checkpoint.vckp").string();
    check("eval exit", run_cli("eval" + cfg + " --checkpoint " + ck + " --policies learned random_moving "
                                "random_trajectory handcrafted_long --out " + (d / "eval").string()) == 0);
    check("bench exit", run_cli("bench" + cfg + " --iterations 2 --out " + (d / "bench").string()) == 0);
    check("replay exit", run_cli("replay" + cfg + " --generate --policy learned --checkpoint " + ck +
                                 " --rig-seed 9 --out " + (d / "replay").string()) == 0);
  }
  const fs::path a = root / "a", b = root / "b";
  for (const char *f : {"train/checkpoint.vckp", "train/train_log.csv", "train/config.json"}) {
    check(f, slurp(a / f) == slurp(b / f) && !slurp(a / f).empty());
  }
  check("eval/eval.csv", drop_columns(slurp(a / "eval/eval.csv"), {"solve_s"}) ==
                             drop_columns(slurp(b / "eval/eval.csv"), {"solve_s"}));
  check("bench/bench.csv", drop_columns(slurp(a / "bench/bench.csv"), {"mean_s"}) ==
                               drop_columns(slurp(b / "bench/bench.csv"), {"mean_s"}));
  check("replay/result.json",
        json_without(a / "replay/result.json", {"timings"}) == json_without(b / "replay/result.json", {"timings"}));
  for (const auto &e : fs::directory_iterator(a / "replay/recording")) {
    const fs::path rel = fs::relative(e.path(), a);
    check(rel.string(), slurp(a / rel) == slurp(b / rel));
  }

  // Checkpoint restore: 300 steps, resume to 600, compare with the straight run.
  const fs::path r = root / "resume";
  check("resume first half", run_cli("train" + cfg + " --seed 4 --steps 300 --out " + r.string()) == 0);
  check("resume second half", run_cli("train --checkpoint " + (r / "checkpoint.vckp").string() +
                                      " --steps 600 --out " + r.string()) == 0);
  check("resumed checkpoint", slurp(r / "checkpoint.vckp") == slurp(a / "train/checkpoint.vckp"));
  check("resumed log", slurp(r / "train_log.csv") == slurp(a / "train/train_log.csv"));

  // In-process: save mid-run, reload, continue.
  Config c;
  c.seed = 8;
  c.train.warmup = 200;
  c.sac.hidden = 32;
  c.sac.batch = 64;
  Trainer x(c);
  x.train(300);
  std::stringstream ss;
  x.save(ss);
  Trainer y = Trainer::load(ss);
  x.train(600);
  y.train(600);
  check("in-process restore", x == y && x.log() == y.log());
  fs::remove_all(root);

  std::string detail = failures.empty() ? "train, eval, bench and replay outputs identical across runs; "
                                          "checkpoint resume identical to a straight run"
                                        : "mismatch:";
  for (const auto &f : failures) detail += " " + f;
  return {failures.empty(), detail + fmt(", %.1f s", seconds_since(t0))};
}

} // namespace

int main(int argc, char **argv) {
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria{
      {"MDP fidelity", mdp_fidelity},
      {"Solver accuracy, noise-free", solver_noiseless},
      {"Solver accuracy, noisy", solver_noisy},
      {"RL correctness", rl_correctness},
      {"End-to-end learning signal", learning_signal},
      {"Determinism", determinism},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!pick.empty() && !pick.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}

// vical: train, evaluate, benchmark and replay the calibration-policy pipeline.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vical/config.hpp"
#include "vical/eval.hpp"
#include "vical/recording.hpp"
#include "vical/train.hpp"

namespace fs = std::filesystem;
using namespace vical;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
};

void add_common(CLI::App *cmd, Common &c, const std::string &default_out) {
  c.out = default_out;
  cmd->add_option("--config", c.config, "JSON configuration file (missing keys keep their defaults)");
  cmd->add_option("--seed", c.seed, "Override the configuration seed");
  cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint file");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

Config effective_config(const Common &c) {
  Config cfg = c.config.empty() ? Config{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::optional<Agent> load_agent(const std::string &path) {
  if (path.empty()) return std::nullopt;
  return Trainer::load_checkpoint(path).agent();
}

bool needs_agent(const std::vector<std::string> &policies) {
  return std::find(policies.begin(), policies.end(), "learned") != policies.end();
}

// ---------------------------------------------------------------------------

int run_train(const Common &c, std::optional<std::int64_t> steps, bool stub, bool quiet) {
  std::optional<Trainer> trainer;
  if (!c.checkpoint.empty() && fs::exists(c.checkpoint)) {
    trainer.emplace(Trainer::load_checkpoint(c.checkpoint));
    if (!c.config.empty() || c.seed) {
      std::cerr << "note: resuming; the checkpoint's configuration is used\n";
    }
  } else if (!c.checkpoint.empty()) {
    throw MissingCheckpoint("no checkpoint at " + c.checkpoint);
  } else {
    Config cfg = effective_config(c);
    if (stub) cfg.episode.solver = SolverMode::Stub;
    trainer.emplace(std::move(cfg));
  }
  Trainer &t = *trainer;
  if (steps) t.config().train.steps = static_cast<int>(*steps);
  const Config &cfg = t.config();

  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.json", dump_config(cfg));
  std::ofstream log(fs::path(c.out) / "train_log.csv");
  write_training_log_header(log);
  for (const EpisodeLog &e : t.log()) write_training_log_row(log, e);

  const fs::path ckpt = fs::path(c.out) / "checkpoint.vckp";
  const std::int64_t every = std::max(1, cfg.train.checkpoint_every);
  std::int64_t next_ckpt = (t.env_steps() / every + 1) * every;
  const auto t0 = std::chrono::steady_clock::now();
  t.train(cfg.train.steps, [&](const EpisodeLog &e) {
    write_training_log_row(log, e);
    log.flush();
    if (e.env_steps >= next_ckpt) {
      t.save_checkpoint(ckpt.string());
      next_ckpt = (e.env_steps / every + 1) * every;
    }
    if (!quiet && (e.episode + 1) % 10 == 0) {
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("episode %5lld  steps %6lld  return %8.3f  terminal rate %.2f  (%.0f s)\n",
                  static_cast<long long>(e.episode + 1), static_cast<long long>(e.env_steps),
                  e.episode_return, e.terminal_rate, el);
      std::fflush(stdout);
    }
  });
  t.save_checkpoint(ckpt.string());
  std::printf("trained %lld steps over %lld episodes; terminal rate (last %d) %.3f\ncheckpoint %s\n",
              static_cast<long long>(t.env_steps()), static_cast<long long>(t.episodes()),
              cfg.train.log_window, t.terminal_rate(cfg.train.log_window), ckpt.string().c_str());
  return 0;
}

int run_eval(const Common &c, std::optional<int> rigs, const std::vector<std::string> &policies,
             const std::vector<std::string> &tasks, bool quiet) {
  Config cfg = effective_config(c);
  if (rigs) cfg.eval.rigs = *rigs;
  if (!policies.empty()) cfg.eval.policies = policies;
  if (!tasks.empty()) cfg.eval.tasks = tasks;
  std::optional<Agent> agent;
  if (needs_agent(cfg.eval.policies)) {
    if (c.checkpoint.empty()) throw MissingCheckpoint("eval of the learned policy needs --checkpoint");
    agent = load_agent(c.checkpoint);
  }
  fs::create_directories(c.out);
  const EvalReport rep = evaluate(cfg, agent ? &*agent : nullptr, [&](const EvalRow &r) {
    if (!quiet) {
      std::printf("%-18s %-18s rig %llu  error %7.3f%%  path %.3f m  steps %2d%s\n", r.policy.c_str(),
                  to_string(r.task).c_str(), static_cast<unsigned long long>(r.rig_seed), r.error_pct,
                  r.path_m, r.steps, r.terminal ? "  terminal" : "");
      std::fflush(stdout);
    }
  });
  std::ofstream csv(fs::path(c.out) / "eval.csv");
  write_eval_csv(csv, rep.rows);
  write_text(fs::path(c.out) / "summary.json", summary_json(rep, cfg).dump(2) + "\n");
  std::ostringstream table;
  write_summary_table(table, rep);
  write_text(fs::path(c.out) / "summary.txt", table.str());
  write_text(fs::path(c.out) / "config.json", dump_config(cfg));
  std::cout << table.str();
  return 0;
}

/// Wall-clock cost of the main components; the checksum column is deterministic.
int run_bench(const Common &c, int iterations) {
  const Config cfg = effective_config(c);
  fs::create_directories(c.out);
  std::ofstream csv(fs::path(c.out) / "bench.csv");
  csv << "component,iterations,mean_s,checksum\n";
  auto report = [&](const char *name, int n, double seconds, double checksum) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%.6g,%.17g\n", name, n, seconds / n, checksum);
    csv << buf;
    std::printf("%-22s %4d x %10.6f s   checksum %.10g\n", name, n, seconds / n, checksum);
  };
  using clock = std::chrono::steady_clock;

  EpisodeConfig ecfg = cfg.episode;
  ecfg.solver = SolverMode::Stub;
  double checksum = 0.0;
  auto t0 = clock::now();
  std::vector<EpisodeResult> episodes;
  for (int i = 0; i < iterations; ++i) {
    const RigConfig rig = sample_rig(cfg.seed + static_cast<std::uint64_t>(i), cfg.sim);
    RandomMovingPolicy p;
    ecfg.max_steps = cfg.episode.max_steps;
    episodes.push_back(run_episode(p, rig, cfg.sim, ecfg, cfg.mdp, cfg.seed + static_cast<std::uint64_t>(i)));
    checksum += episodes.back().episode_return;
  }
  report("episode_sim", iterations, std::chrono::duration<double>(clock::now() - t0).count(), checksum);

  for (Task task : {Task::Intrinsic, Task::ExtrinsicKnownK, Task::Joint}) {
    EpisodeConfig full = cfg.episode;
    full.task = task;
    checksum = 0.0;
    t0 = clock::now();
    for (int i = 0; i < iterations; ++i) {
      const RigConfig rig = sample_rig(cfg.seed + static_cast<std::uint64_t>(i), cfg.sim);
      checksum += calibrate_episode(episodes[static_cast<std::size_t>(i)].data, rig, full, cfg.mdp).task_error_pct;
    }
    report(("calibrate_" + to_string(task)).c_str(), iterations,
           std::chrono::duration<double>(clock::now() - t0).count(), checksum);
  }

  Agent agent = make_agent(cfg);
  ReplayBuffer buf(4096);
  for (const EpisodeResult &e : episodes) {
    for (const StepRecord &r : e.steps) buf.push({r.state, r.action, r.reward, r.next_state, r.done});
  }
  const int updates = iterations * 5;
  checksum = 0.0;
  t0 = clock::now();
  for (int i = 0; i < updates; ++i) checksum += agent.update(buf).q1;
  report("sac_update", updates, std::chrono::duration<double>(clock::now() - t0).count(), checksum);
  write_text(fs::path(c.out) / "config.json", dump_config(cfg));
  return 0;
}

int run_replay(const Common &c, const std::string &input, bool generate, const std::string &policy,
               const std::string &task, std::uint64_t rig_seed) {
  Config cfg = effective_config(c);
  fs::path dir = input;
  if (generate) {
    const Task t = task_from_string(task);
    std::optional<Agent> agent;
    if (policy == "learned") {
      if (c.checkpoint.empty()) throw MissingCheckpoint("the learned policy needs --checkpoint");
      agent = load_agent(c.checkpoint);
    }
    EpisodeConfig ecfg = cfg.episode;
    ecfg.task = t;
    const RigConfig rig = evaluation_rig(cfg, t, rig_seed);
    const std::vector<Script> scripts = policy.rfind("handcrafted_", 0) == 0
                                            ? load_scripts(cfg.eval.scripts.empty() ? default_scripts_path()
                                                                                    : cfg.eval.scripts)
                                            : std::vector<Script>{};
    auto p = make_policy(policy, cfg, agent ? &*agent : nullptr, scripts, initial_pose(rig, ecfg));
    const EpisodeResult r = run_episode(*p, rig, cfg.sim, ecfg, cfg.mdp, rig_seed);
    Recording rec{{rig_seed, rig_seed, policy, t, config_to_json(cfg)}, rig, r.data};
    dir = fs::path(c.out) / "recording";
    write_recording(dir, rec);
    std::printf("recorded %zu steps (%zu frames, %zu IMU samples) to %s\n", r.steps.size(), r.data.frames.size(),
                r.data.imu.size(), dir.string().c_str());
  } else if (input.empty()) {
    throw RecordingError("replay needs --input <recording dir> or --generate");
  }
  const Recording rec = read_recording(dir);
  const nlohmann::json result = solve_recording(rec, cfg);
  const fs::path out = generate || c.out != "runs/replay" ? fs::path(c.out) : dir;
  fs::create_directories(out);
  write_text(out / "result.json", result.dump(2) + "\n");
  std::printf("task %s: error %.4f%%  solve %.3f s -> %s\n", result["task"].get<std::string>().c_str(),
              result["errors"]["task_pct"].get<double>(), result["timings"]["solve_s"].get<double>(),
              (out / "result.json").string().c_str());
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Learned motion policies for camera and camera-IMU calibration"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Less progress output");

  Common tc, ec, bc, rc;
  auto *train = app.add_subcommand("train", "Train the SAC agent");
  add_common(train, tc, "runs/train");
  std::optional<std::int64_t> steps;
  bool stub = false;
  train->add_option("--steps", steps, "Override train.steps");
  train->add_flag("--stub-solver", stub, "Replace the calibration solver by ground truth plus noise");

  auto *eval = app.add_subcommand("eval", "Evaluate policies on sampled rigs");
  add_common(eval, ec, "runs/eval");
  std::optional<int> rigs;
  std::vector<std::string> policies, tasks;
  eval->add_option("--rigs", rigs, "Override eval.rigs");
  eval->add_option("--policies", policies, "Override eval.policies");
  eval->add_option("--tasks", tasks, "Override eval.tasks");

  auto *bench = app.add_subcommand("bench", "Time the simulator, solver and SAC update");
  add_common(bench, bc, "runs/bench");
  int iterations = 5;
  bench->add_option("--iterations", iterations, "Repetitions per component")->capture_default_str();

  auto *replay = app.add_subcommand("replay", "Solve a recorded episode offline");
  add_common(replay, rc, "runs/replay");
  std::string input, policy = "handcrafted_long", task = "joint";
  bool generate = false;
  std::uint64_t rig_seed = 0;
  replay->add_option("--input", input, "Recording directory");
  replay->add_flag("--generate", generate, "Record a fresh episode under <out>/recording first");
  replay->add_option("--policy", policy, "Policy for --generate")->capture_default_str();
  replay->add_option("--task", task, "Task for --generate")->capture_default_str();
  replay->add_option("--rig-seed", rig_seed, "Rig seed for --generate")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(tc, steps, stub, quiet);
    if (*eval) return run_eval(ec, rigs, policies, tasks, quiet);
    if (*bench) return run_bench(bc, iterations);
    if (*replay) return run_replay(rc, input, generate, policy, task, rig_seed);
  } catch (const ParseError &e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const MissingCheckpoint &e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

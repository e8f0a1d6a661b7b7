#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/config.hpp"
#include "vical/harness.hpp"
#include "vical/train.hpp"

namespace vical {

#ifndef VICAL_DATA_DIR
#define VICAL_DATA_DIR "data"
#endif

inline std::string default_scripts_path() { return std::string(VICAL_DATA_DIR) + "/handcrafted.json"; }

struct EvalRow {
  std::string policy;
  Task task = Task::Joint;
  std::uint64_t rig_seed = 0;
  double error_pct = 100.0;
  double path_m = 0.0;
  double solve_s = 0.0;
  int steps = 0;
  bool terminal = false;
  bool solver_ok = false;
};

struct EvalSummary {
  std::string policy;
  Task task = Task::Joint;
  int runs = 0;
  double error_mean = 0.0;
  double error_std = 0.0; // population standard deviation
  double path_mean = 0.0;
  double solve_mean = 0.0;
  double steps_mean = 0.0;
  double terminal_rate = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<EvalSummary> summaries;

  const EvalSummary &summary(const std::string &policy, Task task) const {
    for (const EvalSummary &s : summaries) {
      if (s.policy == policy && s.task == task) return s;
    }
    throw std::out_of_range("no summary for " + policy + "/" + to_string(task));
  }
};

/// Mean and population std per (policy, task), in first-appearance order.
inline std::vector<EvalSummary> summarize(const std::vector<EvalRow> &rows) {
  std::vector<EvalSummary> out;
  std::vector<std::vector<const EvalRow *>> groups;
  for (const EvalRow &r : rows) {
    std::size_t g = 0;
    while (g < out.size() && !(out[g].policy == r.policy && out[g].task == r.task)) ++g;
    if (g == out.size()) {
      out.push_back({r.policy, r.task});
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    EvalSummary &s = out[g];
    const double n = static_cast<double>(groups[g].size());
    s.runs = static_cast<int>(groups[g].size());
    for (const EvalRow *r : groups[g]) {
      s.error_mean += r->error_pct / n;
      s.path_mean += r->path_m / n;
      s.solve_mean += r->solve_s / n;
      s.steps_mean += r->steps / n;
      s.terminal_rate += (r->terminal ? 1.0 : 0.0) / n;
    }
    double var = 0.0;
    for (const EvalRow *r : groups[g]) var += (r->error_pct - s.error_mean) * (r->error_pct - s.error_mean) / n;
    s.error_std = std::sqrt(var);
  }
  return out;
}

inline std::unique_ptr<Policy> make_policy(const std::string &name, const Config &cfg, const Agent *agent,
                                           const std::vector<Script> &scripts, const Pose &origin) {
  if (name == "learned") {
    if (!agent) throw MissingCheckpoint("the learned policy needs a trained checkpoint");
    return std::make_unique<SacPolicy<float>>(*agent, cfg.eval.stochastic, cfg.seed);
  }
  if (name == "random_moving") return std::make_unique<RandomMovingPolicy>();
  if (name == "random_trajectory") {
    return std::make_unique<RandomTrajectoryPolicy>(cfg.episode.workspace, cfg.episode.bounds,
                                                    cfg.episode.max_steps);
  }
  if (name == "null") return std::make_unique<NullPolicy>();
  const std::string prefix = "handcrafted_";
  if (name.rfind(prefix, 0) == 0) {
    return std::make_unique<ScriptPolicy>(find_script(scripts, name.substr(prefix.size())), origin,
                                          cfg.episode.bounds);
  }
  throw std::invalid_argument("unknown policy '" + name + "'");
}

/// Rig for evaluation: the distortion center stays at the image center except for the joint task.
inline RigConfig evaluation_rig(const Config &cfg, Task task, std::uint64_t rig_seed) {
  SimConfig sim = cfg.sim;
  sim.randomize_center = sim.randomize_center && task == Task::Joint;
  return sample_rig(rig_seed, sim);
}

/// Runs every configured policy on every task over the same rig seeds.
/// Episodes always end with a calibration (also on timeout) so every run is scored.
inline EvalReport evaluate(const Config &cfg, const Agent *agent,
                           const std::function<void(const EvalRow &)> &on_row = {}) {
  bool needs_scripts = false;
  for (const std::string &p : cfg.eval.policies) {
    if (p == "learned" && !agent) throw MissingCheckpoint("the learned policy needs a trained checkpoint");
    needs_scripts |= p.rfind("handcrafted_", 0) == 0;
  }
  const std::vector<Script> scripts =
      needs_scripts ? load_scripts(cfg.eval.scripts.empty() ? default_scripts_path() : cfg.eval.scripts)
                    : std::vector<Script>{};
  EvalReport rep;
  for (const std::string &task_name : cfg.eval.tasks) {
    const Task task = task_from_string(task_name);
    EpisodeConfig ecfg = cfg.episode;
    ecfg.task = task;
    ecfg.calibrate_on_timeout = cfg.eval.calibrate_on_timeout;
    for (const std::string &pname : cfg.eval.policies) {
      for (int i = 0; i < cfg.eval.rigs; ++i) {
        const std::uint64_t seed = cfg.eval.rig_seed_base + static_cast<std::uint64_t>(i);
        const RigConfig rig = evaluation_rig(cfg, task, seed);
        auto policy = make_policy(pname, cfg, agent, scripts, initial_pose(rig, ecfg));
        const EpisodeResult r = run_episode(*policy, rig, cfg.sim, ecfg, cfg.mdp, seed);
        EvalRow row;
        row.policy = pname;
        row.task = task;
        row.rig_seed = seed;
        row.path_m = r.path_len;
        row.steps = static_cast<int>(r.steps.size());
        row.terminal = r.terminal;
        if (r.calib) {
          row.error_pct = r.calib->task_error_pct;
          row.solve_s = r.calib->solve_s;
          row.solver_ok = r.calib->ok;
        }
        rep.rows.push_back(row);
        if (on_row) on_row(row);
      }
    }
  }
  rep.summaries = summarize(rep.rows);
  return rep;
}

/// True when both reports agree on everything except the measured solve times.
inline bool same_results(const EvalReport &a, const EvalReport &b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const EvalRow &x = a.rows[i], &y = b.rows[i];
    if (x.policy != y.policy || x.task != y.task || x.rig_seed != y.rig_seed ||
        x.error_pct != y.error_pct || x.path_m != y.path_m || x.steps != y.steps ||
        x.terminal != y.terminal || x.solver_ok != y.solver_ok) {
      return false;
    }
  }
  return true;
}

inline void write_eval_csv(std::ostream &os, const std::vector<EvalRow> &rows) {
  os << "policy,task,rig_seed,error_pct,path_m,solve_s,steps,terminal,solver_ok\n";
  char buf[512];
  for (const EvalRow &r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.17g,%.17g,%.17g,%d,%d,%d\n", r.policy.c_str(),
                  to_string(r.task).c_str(), static_cast<unsigned long long>(r.rig_seed), r.error_pct,
                  r.path_m, r.solve_s, r.steps, r.terminal ? 1 : 0, r.solver_ok ? 1 : 0);
    os << buf;
  }
}

inline nlohmann::json summary_json(const EvalReport &rep, const Config &cfg) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  j["summaries"] = nlohmann::json::array();
  for (const EvalSummary &s : rep.summaries) {
    j["summaries"].push_back({{"policy", s.policy},
                              {"task", to_string(s.task)},
                              {"runs", s.runs},
                              {"error_mean_pct", s.error_mean},
                              {"error_std_pct", s.error_std},
                              {"path_mean_m", s.path_mean},
                              {"solve_mean_s", s.solve_mean},
                              {"steps_mean", s.steps_mean},
                              {"terminal_rate", s.terminal_rate}});
  }
  j["notes"] = "handcrafted_* policies are representative scripted stand-ins; solve times are wall clock";
  return j;
}

/// Fixed-width text table of the summaries.
inline void write_summary_table(std::ostream &os, const EvalReport &rep) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %-18s %6s %10s %10s %9s %9s %7s\n", "policy", "task", "runs",
                "error[%]", "std[%]", "path[m]", "solve[s]", "term");
  os << buf;
  for (const EvalSummary &s : rep.summaries) {
    std::snprintf(buf, sizeof buf, "%-20s %-18s %6d %10.3f %10.3f %9.3f %9.3f %7.2f\n", s.policy.c_str(),
                  to_string(s.task).c_str(), s.runs, s.error_mean, s.error_std, s.path_mean, s.solve_mean,
                  s.terminal_rate);
    os << buf;
  }
}

} // namespace vical

#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/calib.hpp"
#include "vical/mdp.hpp"
#include "vical/sac.hpp"
#include "vical/sim.hpp"

namespace vical {

using Vec6 = Eigen::Matrix<double, 6, 1>;

// ---------------------------------------------------------------------------
// Episode configuration

/// Axis-aligned box, relative to the initial end-effector position.
struct Workspace {
  Vec3 lo{-0.5, -0.5, -0.4};
  Vec3 hi{0.5, 0.5, 0.4};

  bool contains(const Vec3 &p, const Vec3 &origin, double tol = 1e-9) const {
    const Vec3 q = p - origin;
    return (q.array() >= lo.array() - tol).all() && (q.array() <= hi.array() + tol).all();
  }

  /// Longest prefix of the segment p -> p + d that stays inside the box.
  Vec3 clamp_step(const Vec3 &p, const Vec3 &d, const Vec3 &origin) const {
    double s = 1.0;
    const Vec3 q = p - origin;
    for (int i = 0; i < 3; ++i) {
      if (d[i] > 0 && q[i] + d[i] > hi[i]) s = std::min(s, std::max(0.0, (hi[i] - q[i]) / d[i]));
      if (d[i] < 0 && q[i] + d[i] < lo[i]) s = std::min(s, std::max(0.0, (lo[i] - q[i]) / d[i]));
    }
    return p + s * d;
  }
};

enum class Task { Intrinsic, ExtrinsicKnownK, Joint };
enum class SolverMode { Full, Stub };

inline std::string to_string(Task t) {
  switch (t) {
  case Task::Intrinsic: return "intrinsic";
  case Task::ExtrinsicKnownK: return "extrinsic_known_k";
  case Task::Joint: return "joint";
  }
  return "?";
}

inline Task task_from_string(const std::string &s) {
  if (s == "intrinsic") return Task::Intrinsic;
  if (s == "extrinsic_known_k") return Task::ExtrinsicKnownK;
  if (s == "joint") return Task::Joint;
  throw std::invalid_argument("unknown task '" + s + "'");
}

inline std::string to_string(SolverMode m) { return m == SolverMode::Full ? "full" : "stub"; }

inline SolverMode solver_from_string(const std::string &s) {
  if (s == "full") return SolverMode::Full;
  if (s == "stub") return SolverMode::Stub;
  throw std::invalid_argument("unknown solver mode '" + s + "'");
}

struct EpisodeConfig {
  int max_steps = 20;
  Workspace workspace;
  ActionBounds bounds;
  bool auto_align = true;
  Task task = Task::Joint;
  SolverMode solver = SolverMode::Full;
  double stub_noise = 0.01; // relative parameter noise of the stubbed solver
  bool calibrate_on_timeout = false;
  GravitySource gravity = GravitySource::RestAccel;
  CalibOptions calib;
};

// ---------------------------------------------------------------------------
// Policies

/// Maps the MDP state to a normalized action in [-1, 1]^6.
class Policy {
public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  virtual Vec6 act(const StateVector &x, const CoverageState &s, int step) = 0;
};

/// Zero translation, zero rotation.
class NullPolicy : public Policy {
public:
  std::string name() const override { return "null"; }
  Vec6 act(const StateVector &, const CoverageState &, int) override {
    Vec6 a = Vec6::Zero();
    a[0] = -1.0;
    return a;
  }
};

/// Uniform samples over the action box.
inline Vec6 baseline_random_moving(Rng &rng) {
  Vec6 a;
  for (int i = 0; i < 6; ++i) a[i] = rng.uniform(-1.0, 1.0);
  return a;
}

class RandomMovingPolicy : public Policy {
public:
  explicit RandomMovingPolicy(std::uint64_t seed = 0) : rng_(seed) {}
  std::string name() const override { return "random_moving"; }
  void begin_episode(std::uint64_t seed) override { rng_ = Rng(seed ^ 0x52414e44ULL); }
  Vec6 act(const StateVector &, const CoverageState &, int) override {
    return baseline_random_moving(rng_);
  }

private:
  Rng rng_;
};

/// End-effector waypoints [x y z roll pitch yaw], relative to the initial pose.
struct Script {
  std::string name;
  std::vector<Vec6> waypoints;
};

/// Action that moves from `pose` to `target` (both end-effector poses), clamped to the bounds.
inline Action action_towards(const Pose &pose, const Pose &target, const ActionBounds &b = {}) {
  const Vec3 d = target.position - pose.position;
  const double rho = d.norm();
  const double theta = rho > 0 ? std::atan2(d.y(), d.x()) : 0.0;
  const double phi = rho > 0 ? std::acos(std::clamp(d.z() / rho, -1.0, 1.0)) : 0.0;
  const Euler e = euler_unchecked(target.orientation * pose.orientation.conjugate());
  return Action::clamped(rho, theta, phi, e.roll, e.pitch, e.yaw, b);
}

class ScriptPolicy : public Policy {
public:
  ScriptPolicy(Script script, Pose origin, ActionBounds bounds = {})
      : script_(std::move(script)), origin_(origin), bounds_(bounds) {}
  std::string name() const override { return "handcrafted_" + script_.name; }
  const Script &script() const { return script_; }

  Pose waypoint(std::size_t k) const {
    const Vec6 &w = script_.waypoints[k];
    const Pose rel(w.head<3>(), euler_to_rot(w[3], w[4], w[5]));
    return {origin_.position + rel.position, rel.orientation * origin_.orientation};
  }

  Vec6 act(const StateVector &, const CoverageState &s, int step) override {
    if (step >= static_cast<int>(script_.waypoints.size())) return NullPolicy().act({}, s, step);
    return env_to_action(action_towards(s.pose, waypoint(static_cast<std::size_t>(step)), bounds_),
                         bounds_);
  }

private:
  Script script_;
  Pose origin_;
  ActionBounds bounds_;
};

/// Randomly parametrized smooth trajectory: every pose coordinate follows a
/// sinusoid around the initial pose with random amplitude, frequency and phase.
/// The policy only tracks it and ignores the coverage state.
class RandomTrajectoryPolicy : public Policy {
public:
  explicit RandomTrajectoryPolicy(Workspace ws = {}, ActionBounds bounds = {}, int horizon = 20)
      : ws_(ws), bounds_(bounds), horizon_(horizon) {}
  std::string name() const override { return "random_trajectory"; }

  void begin_episode(std::uint64_t seed) override {
    Rng rng(seed ^ 0x5452414aULL);
    for (int i = 0; i < 6; ++i) {
      const double reach = i < 3 ? 0.45 * std::min(-ws_.lo[i], ws_.hi[i]) : 0.2;
      amp_[i] = rng.uniform(0.3, 1.0) * reach;
      freq_[i] = static_cast<double>(1 + rng.index(3));
      phase_[i] = rng.uniform(0.0, 2.0 * kPi);
    }
  }

  Pose target(const Pose &origin, int k) const {
    Vec6 w;
    for (int i = 0; i < 6; ++i) {
      const double t = 2.0 * kPi * freq_[i] * (k + 1) / horizon_;
      w[i] = amp_[i] * (std::sin(t + phase_[i]) - std::sin(phase_[i]));
    }
    return {origin.position + w.head<3>(), Quat(euler_to_rot(w[3], w[4], w[5])) * origin.orientation};
  }

  Vec6 act(const StateVector &, const CoverageState &s, int step) override {
    if (step == 0) origin_ = s.pose;
    return env_to_action(action_towards(s.pose, target(origin_, step), bounds_), bounds_);
  }

private:
  Workspace ws_;
  ActionBounds bounds_;
  int horizon_;
  Vec6 amp_ = Vec6::Zero(), freq_ = Vec6::Ones(), phase_ = Vec6::Zero();
  Pose origin_;
};

inline std::vector<Script> load_scripts(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script file " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  std::vector<Script> out;
  for (const auto &[name, list] : j.items()) {
    Script s;
    s.name = name;
    for (const auto &w : list) {
      if (w.size() != 6) throw std::runtime_error("waypoint needs 6 values in script " + name);
      Vec6 v;
      for (int i = 0; i < 6; ++i) v[i] = w[i].get<double>();
      s.waypoints.push_back(v);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline Script find_script(const std::vector<Script> &scripts, const std::string &name) {
  for (const Script &s : scripts) {
    if (s.name == name) return s;
  }
  throw std::runtime_error("no script named " + name);
}

template <class S> class SacPolicy : public Policy {
public:
  SacPolicy(const SacAgent<S> &agent, bool stochastic, std::uint64_t seed = 0)
      : agent_(agent), stochastic_(stochastic), rng_(seed) {}
  std::string name() const override { return "learned"; }
  void begin_episode(std::uint64_t seed) override {
    if (stochastic_) rng_ = Rng(seed ^ 0x534143ULL);
  }
  Vec6 act(const StateVector &x, const CoverageState &, int) override {
    const Eigen::VectorXd a = stochastic_ ? agent_.sample_action(x, rng_).first : agent_.mean_action(x);
    return Vec6(a);
  }

private:
  const SacAgent<S> &agent_;
  bool stochastic_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeData {
  std::vector<Frame> frames; // every visible frame, initial one first
  std::vector<RestObservation> rests;
  ImuSamples imu;
  std::vector<Pose> waypoints; // end-effector pose at every rest instant
};

struct CalibOutcome {
  bool ok = false;
  std::string error;
  Intrinsics intrinsics;
  Pose T_cam_imu;
  double intrinsic_error_pct = 100.0;
  double extrinsic_error_pct = 100.0;
  double task_error_pct = 100.0;
  double reproj_rms = 0.0;
  double solve_s = 0.0;
  double reward = 0.0; // terminal reward
};

struct StepRecord {
  StateVector state;
  Vec6 action; // normalized
  Action executed;
  double reward = 0.0;
  StateVector next_state;
  bool done = false;
  Pose pose_before, pose_after;
  int detections = 0;
};

struct EpisodeResult {
  std::vector<StepRecord> steps;
  CoverageState final_state;
  bool terminal = false;
  int calibration_calls = 0;
  std::optional<CalibOutcome> calib;
  double episode_return = 0.0;
  double path_len = 0.0;
  EpisodeData data;
};

inline Eigen::VectorXd task_truth(const RigConfig &rig, Task task) {
  return task == Task::Intrinsic ? Eigen::VectorXd(rig.intrinsics.params())
                                 : Eigen::VectorXd(extrinsic_params(rig.T_cam_imu));
}

/// Runs the calibration pipeline for a task and scores it against the rig.
inline CalibOutcome calibrate_episode(const EpisodeData &data, const RigConfig &rig,
                                      const EpisodeConfig &cfg, const MdpConfig &mdp,
                                      std::uint64_t stub_seed = 0) {
  CalibOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::VectorXd truth = task_truth(rig, cfg.task);
  if (cfg.solver == SolverMode::Stub) {
    Rng rng(stub_seed);
    Eigen::VectorXd est = truth;
    for (Eigen::Index i = 0; i < est.size(); ++i) est[i] *= 1.0 + rng.normal(0.0, cfg.stub_noise);
    out.ok = true;
    out.intrinsics = rig.intrinsics;
    out.T_cam_imu = rig.T_cam_imu;
    out.task_error_pct = percent_error(truth, est);
    out.reward = terminal_reward(truth, est, mdp.reward.c3, mdp.reward.c4);
    (cfg.task == Task::Intrinsic ? out.intrinsic_error_pct : out.extrinsic_error_pct) =
        out.task_error_pct;
    return out;
  }
  try {
    Intrinsics K = rig.intrinsics;
    if (cfg.task != Task::ExtrinsicKnownK) {
      std::vector<Detection> dets;
      for (const Frame &f : data.frames) dets.push_back(f.detection);
      const CalibResult r = calibrate_intrinsics(dets, rig.board, rig.intrinsics.width,
                                                 rig.intrinsics.height, cfg.calib);
      K = r.intrinsics;
      out.reproj_rms = r.reproj_rms;
      out.intrinsic_error_pct = percent_error(rig.intrinsics.params(), K.params());
    }
    out.intrinsics = K;
    Eigen::VectorXd est;
    if (cfg.task == Task::Intrinsic) {
      est = K.params();
    } else {
      out.T_cam_imu = calibrate_extrinsic(data.rests, data.imu, K, rig.board, cfg.gravity);
      est = extrinsic_params(out.T_cam_imu);
      out.extrinsic_error_pct = percent_error(truth, est);
    }
    out.task_error_pct = percent_error(truth, est);
    out.reward = terminal_reward(truth, est, mdp.reward.c3, mdp.reward.c4);
    out.ok = std::isfinite(out.task_error_pct);
    if (!out.ok) out.task_error_pct = 100.0, out.reward = 0.0;
  } catch (const Error &e) {
    out.ok = false;
    out.error = e.what();
    out.task_error_pct = 100.0;
    out.reward = 0.0;
  }
  out.solve_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Initial end-effector pose: origin, facing the board center when auto-aligning.
inline Pose initial_pose(const RigConfig &rig, const EpisodeConfig &cfg) {
  if (!cfg.auto_align) return Pose::identity();
  const Vec3 center = rig.board.pose.transform(rig.board.center_local());
  return look_at(Vec3::Zero(), center);
}

using TransitionSink = std::function<void(const StepRecord &)>;

/// One episode: policy -> clamped action -> simulated segment -> state update
/// -> reward, until the terminal condition or max_steps.
inline EpisodeResult run_episode(Policy &policy, const RigConfig &rig, const SimConfig &sim,
                                 const EpisodeConfig &cfg, const MdpConfig &mdp,
                                 std::uint64_t episode_seed, const TransitionSink &sink = {}) {
  EpisodeResult res;
  Rng rng(episode_seed);
  policy.begin_episode(episode_seed);
  SimClock clock{0, rig.imu.rate};
  BiasState bias;
  const Pose mount = camera_mount();
  const Pose start = initial_pose(rig, cfg);
  const Vec3 origin = start.position;

  auto rest_at = [&](const Pose &ee, std::optional<Detection> det) {
    RestObservation r;
    r.time = clock.time();
    r.detection = std::move(det);
    r.gravity_prior = rig.imu_pose(compose(ee, mount)).orientation.conjugate() * kGravityWorld;
    res.data.rests.push_back(std::move(r));
    res.data.waypoints.push_back(ee);
  };

  // Still frame before the first move, used by the calibrator only.
  auto first = observe_board(compose(start, mount), rig, rng, sim.pixel_noise, sim.min_corners);
  if (first) res.data.frames.push_back({0.0, compose(start, mount), *first});
  rest_at(start, first);

  CoverageState s = init_state(start, mdp);
  for (int step = 0; step < cfg.max_steps; ++step) {
    StepRecord rec;
    rec.state = to_vector(s, mdp);
    rec.pose_before = s.pose;
    rec.action = policy.act(rec.state, s, step).cwiseMax(-1.0).cwiseMin(1.0);
    rec.executed = action_to_env(rec.action, cfg.bounds);
    Pose target = apply_action(s.pose, rec.executed);
    target.position = cfg.workspace.clamp_step(s.pose.position, target.position - s.pose.position, origin);
    rec.executed.rho = (target.position - s.pose.position).norm(); // after workspace clamping
    rec.pose_after = target;

    const std::int64_t end_tick = clock.tick + std::llround(sim.segment_duration * rig.imu.rate);
    SegmentData seg = run_segment(compose(s.pose, mount), compose(target, mount), rig, sim, clock,
                                  bias, rng);
    std::vector<Detection> dets;
    std::optional<Detection> rest_det;
    for (Frame &f : seg.frames) {
      if (std::llround(f.timestamp * rig.imu.rate) == end_tick) rest_det = f.detection;
      dets.push_back(f.detection);
      res.data.frames.push_back(std::move(f));
    }
    res.data.imu.append(seg.imu);
    rest_at(target, rest_det);
    rec.detections = static_cast<int>(dets.size());

    const CoverageState next = update_state(s, dets, s.pose, target, mdp);
    rec.next_state = to_vector(next, mdp);
    rec.reward = step_reward(rec.state, rec.next_state, s.pose, target, mdp.reward.c1, mdp.reward.c2);
    rec.done = terminal_check(next, mdp.thresholds, mdp);
    s = next;

    const bool last = rec.done || step + 1 == cfg.max_steps;
    if (last && (rec.done || cfg.calibrate_on_timeout)) {
      res.calib = calibrate_episode(res.data, rig, cfg, mdp, episode_seed ^ 0x5354554255ULL);
      ++res.calibration_calls;
      if (rec.done) rec.reward += res.calib->reward;
    }
    res.episode_return += rec.reward;
    res.steps.push_back(rec);
    if (sink) sink(rec);
    if (rec.done) break;
  }
  res.terminal = !res.steps.empty() && res.steps.back().done;
  res.final_state = s;
  res.path_len = s.path_len;
  return res;
}

} // namespace vical

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/harness.hpp"

namespace vical {

struct TrainConfig {
  int steps = 15000;             // environment steps (the last episode is finished)
  int warmup = 500;              // uniform random actions before learning starts
  int updates_per_step = 1;
  int checkpoint_every = 2500;   // steps; checkpoints land on episode boundaries
  int log_window = 50;           // episodes in the terminal-rate window
  int replay_capacity = 100000;
  std::uint64_t rig_seed_base = 1000000;
};

struct EvalConfig {
  int rigs = 20;
  std::uint64_t rig_seed_base = 5000000;
  std::vector<std::string> policies{"learned", "random_moving", "random_trajectory",
                                    "handcrafted_short", "handcrafted_long"};
  std::vector<std::string> tasks{"intrinsic", "extrinsic_known_k", "joint"};
  std::string scripts = "";      // empty: bundled data/handcrafted.json
  bool stochastic = false;       // learned policy uses its mean action by default
  bool calibrate_on_timeout = true;
};

struct Config {
  std::uint64_t seed = 0;
  SimConfig sim;
  MdpConfig mdp;
  EpisodeConfig episode;
  SacConfig sac;
  TrainConfig train;
  EvalConfig eval;
};

// ---------------------------------------------------------------------------
// Field lists, shared by the reader and the writer.

template <class V> void visit_fields(V &v, ImuNoise &c) {
  v("rate", c.rate);
  v("accel_noise", c.accel_noise);
  v("accel_drift", c.accel_drift);
  v("gyro_noise", c.gyro_noise);
  v("gyro_drift", c.gyro_drift);
}

template <class V> void visit_fields(V &v, SimConfig &c) {
  v("width", c.width);
  v("height", c.height);
  v("fov_mean", c.fov_mean);
  v("fov_std", c.fov_std);
  v("k_std", c.k_std);
  v("center_std", c.center_std);
  v("randomize_center", c.randomize_center);
  v("extr_pos_mean", c.extr_pos_mean);
  v("extr_pos_std", c.extr_pos_std);
  v("extr_rpy_mean", c.extr_rpy_mean);
  v("extr_rpy_std", c.extr_rpy_std);
  v("imu", c.imu);
  v("camera_rate", c.camera_rate);
  v("segment_duration", c.segment_duration);
  v("pixel_noise", c.pixel_noise);
  v("min_corners", c.min_corners);
  v("board_distance", c.board_distance);
}

template <class V> void visit_fields(V &v, Thresholds &c) {
  v("poly", c.poly);
  v("area", c.area);
  v("skew", c.skew);
  v("dp", c.dp);
  v("dtheta", c.dtheta);
}

template <class V> void visit_fields(V &v, RewardCoefficients &c) {
  v("c1", c.c1);
  v("c2", c.c2);
  v("c3", c.c3);
  v("c4", c.c4);
}

template <class V> void visit_fields(V &v, MdpConfig &c) {
  v("width", c.width);
  v("height", c.height);
  v("a_ref_lo", c.a_ref_lo);
  v("a_ref_hi", c.a_ref_hi);
  v("eta_center", c.eta_center);
  v("eta_span", c.eta_span);
  v("dp_ref", c.dp_ref);
  v("dtheta_ref", c.dtheta_ref);
  v("thresholds", c.thresholds);
  v("reward", c.reward);
}

template <class V> void visit_fields(V &v, Workspace &c) {
  v("lo", c.lo);
  v("hi", c.hi);
}

template <class V> void visit_fields(V &v, ActionBounds &c) {
  v("rho_max", c.rho_max);
  v("rot_max", c.rot_max);
}

template <class V> void visit_fields(V &v, LmOptions &c) {
  v("max_iterations", c.max_iterations);
  v("step_tol", c.step_tol);
  v("grad_tol", c.grad_tol);
  v("cost_tol", c.cost_tol);
  v("initial_lambda", c.initial_lambda);
  v("fd_step", c.fd_step);
}

template <class V> void visit_fields(V &v, CalibOptions &c) {
  v("max_frames", c.max_frames);
  v("rms_cap", c.rms_cap);
  v("min_frames", c.min_frames);
  v("min_orientations", c.min_orientations);
  v("orientation_separation", c.orientation_separation);
  v("lm", c.lm);
}

template <class V> void visit_fields(V &v, EpisodeConfig &c) {
  v("max_steps", c.max_steps);
  v("workspace", c.workspace);
  v("bounds", c.bounds);
  v("auto_align", c.auto_align);
  v("task", c.task);
  v("solver", c.solver);
  v("stub_noise", c.stub_noise);
  v("calibrate_on_timeout", c.calibrate_on_timeout);
  v("gravity", c.gravity);
  v("calib", c.calib);
}

template <class V> void visit_fields(V &v, AdamConfig &c) {
  v("lr", c.lr);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("eps", c.eps);
}

template <class V> void visit_fields(V &v, SacConfig &c) {
  v("hidden", c.hidden);
  v("hidden_layers", c.hidden_layers);
  v("alpha", c.alpha);
  v("auto_alpha", c.auto_alpha);
  v("target_entropy_per_dim", c.target_entropy_per_dim);
  v("gamma", c.gamma);
  v("tau", c.tau);
  v("adam", c.adam);
  v("batch", c.batch);
  v("log_std_min", c.log_std_min);
  v("log_std_max", c.log_std_max);
}

template <class V> void visit_fields(V &v, TrainConfig &c) {
  v("steps", c.steps);
  v("warmup", c.warmup);
  v("updates_per_step", c.updates_per_step);
  v("checkpoint_every", c.checkpoint_every);
  v("log_window", c.log_window);
  v("replay_capacity", c.replay_capacity);
  v("rig_seed_base", c.rig_seed_base);
}

template <class V> void visit_fields(V &v, EvalConfig &c) {
  v("rigs", c.rigs);
  v("rig_seed_base", c.rig_seed_base);
  v("policies", c.policies);
  v("tasks", c.tasks);
  v("scripts", c.scripts);
  v("stochastic", c.stochastic);
  v("calibrate_on_timeout", c.calibrate_on_timeout);
}

template <class V> void visit_fields(V &v, Config &c) {
  v("seed", c.seed);
  v("sim", c.sim);
  v("mdp", c.mdp);
  v("episode", c.episode);
  v("sac", c.sac);
  v("train", c.train);
  v("eval", c.eval);
}

// ---------------------------------------------------------------------------

namespace config_detail {

using nlohmann::json;

inline std::string gravity_name(GravitySource g) {
  return g == GravitySource::RestAccel ? "rest_accel" : "prior";
}

inline GravitySource gravity_from_string(const std::string &s) {
  if (s == "rest_accel") return GravitySource::RestAccel;
  if (s == "prior") return GravitySource::Prior;
  throw std::invalid_argument("unknown gravity source '" + s + "'");
}

struct Writer {
  json out = json::object();

  template <class T> void operator()(const char *key, T &value) { out[key] = to_json(value); }

  static json to_json(const double &v) { return v; }
  static json to_json(const int &v) { return v; }
  static json to_json(const bool &v) { return v; }
  static json to_json(const std::uint64_t &v) { return v; }
  static json to_json(const std::string &v) { return v; }
  static json to_json(const std::vector<std::string> &v) { return v; }
  static json to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }
  static json to_json(const Task &v) { return to_string(v); }
  static json to_json(const SolverMode &v) { return to_string(v); }
  static json to_json(const GravitySource &v) { return gravity_name(v); }
  template <class T> static json to_json(const T &v) {
    Writer w;
    T copy = v;
    visit_fields(w, copy);
    return w.out;
  }
};

/// 1-based line of the first `"key":` in the source text (0 if not found).
inline int line_of_key(const std::string &text, const std::string &key) {
  const std::string quoted = "\"" + key + "\"";
  std::size_t pos = 0;
  while ((pos = text.find(quoted, pos)) != std::string::npos) {
    std::size_t after = pos + quoted.size();
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    if (after < text.size() && text[after] == ':') {
      return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
    }
    pos = after;
  }
  return 0;
}

struct Reader {
  const json &in;
  std::string prefix;
  const std::string &text;
  std::set<std::string> seen;

  [[noreturn]] void fail(const std::string &key, const std::string &msg) const {
    const std::string full = prefix + key;
    throw ParseError(msg + " at '" + full + "' (line " + std::to_string(line_of_key(text, key)) + ")",
                     line_of_key(text, key), full);
  }

  template <class T> void operator()(const char *key, T &value) {
    seen.insert(key);
    auto it = in.find(key);
    if (it == in.end()) return;
    try {
      from_json(*it, value, key);
    } catch (const ParseError &) {
      throw;
    } catch (const std::exception &e) {
      fail(key, e.what());
    }
  }

  void finish() const {
    for (const auto &[k, _] : in.items()) {
      if (!seen.count(k)) fail(k, "unknown key");
    }
  }

  template <class T> static T number(const json &j) {
    if (!j.is_number()) throw std::invalid_argument("expected a number");
    if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
          throw std::invalid_argument("expected a non-negative integer");
        }
      }
    }
    return j.get<T>();
  }

  void from_json(const json &j, double &v, const char *) { v = number<double>(j); }
  void from_json(const json &j, int &v, const char *) { v = number<int>(j); }
  void from_json(const json &j, std::uint64_t &v, const char *) { v = number<std::uint64_t>(j); }
  void from_json(const json &j, bool &v, const char *) {
    if (!j.is_boolean()) throw std::invalid_argument("expected a boolean");
    v = j.get<bool>();
  }
  void from_json(const json &j, std::string &v, const char *) {
    if (!j.is_string()) throw std::invalid_argument("expected a string");
    v = j.get<std::string>();
  }
  void from_json(const json &j, std::vector<std::string> &v, const char *) {
    if (!j.is_array()) throw std::invalid_argument("expected an array of strings");
    v.clear();
    for (const auto &e : j) {
      if (!e.is_string()) throw std::invalid_argument("expected an array of strings");
      v.push_back(e.get<std::string>());
    }
  }
  void from_json(const json &j, Vec3 &v, const char *) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected an array of 3 numbers");
    for (int i = 0; i < 3; ++i) v[i] = number<double>(j[static_cast<std::size_t>(i)]);
  }
  void from_json(const json &j, Task &v, const char *k) {
    std::string s;
    from_json(j, s, k);
    v = task_from_string(s);
  }
  void from_json(const json &j, SolverMode &v, const char *k) {
    std::string s;
    from_json(j, s, k);
    v = solver_from_string(s);
  }
  void from_json(const json &j, GravitySource &v, const char *k) {
    std::string s;
    from_json(j, s, k);
    v = gravity_from_string(s);
  }
  template <class T> void from_json(const json &j, T &v, const char *key) {
    if (!j.is_object()) throw std::invalid_argument("expected an object");
    Reader sub{j, prefix + key + ".", text, {}};
    visit_fields(sub, v);
    sub.finish();
  }
};

} // namespace config_detail

inline nlohmann::json config_to_json(const Config &c) { return config_detail::Writer::to_json(c); }

inline std::string dump_config(const Config &c) { return config_to_json(c).dump(2) + "\n"; }

/// Strict parse: unknown keys and wrongly typed values raise ParseError.
/// Missing keys keep their defaults; empty or whitespace-only text gives all defaults.
inline Config parse_config(const std::string &text) {
  Config c;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    const std::size_t byte = std::min(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
    throw ParseError(std::string("malformed JSON (line ") + std::to_string(line) + "): " + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("top level must be an object", 1);
  config_detail::Reader r{j, "", text, {}};
  visit_fields(r, c);
  r.finish();
  if (c.episode.max_steps < 1) throw ParseError("episode.max_steps must be >= 1", config_detail::line_of_key(text, "max_steps"), "episode.max_steps");
  return c;
}

inline Config load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline bool operator==(const Config &a, const Config &b) { return config_to_json(a) == config_to_json(b); }

} // namespace vical

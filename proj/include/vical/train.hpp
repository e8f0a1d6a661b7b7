#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vical/config.hpp"
#include "vical/harness.hpp"

namespace vical {

using Agent = SacAgent<float>;

struct EpisodeLog {
  std::int64_t episode = 0;
  std::int64_t env_steps = 0; // cumulative, after this episode
  double episode_return = 0.0;
  int steps = 0;
  bool terminal = false;
  double terminal_rate = 0.0; // over the trailing log window
  double error_pct = 100.0;   // task error of the terminal calibration, 100 if none

  bool operator==(const EpisodeLog &) const = default;
};

inline constexpr char kCheckpointMagic[4] = {'V', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 2;

inline std::uint64_t training_rig_seed(const Config &cfg, std::int64_t episode) {
  return cfg.train.rig_seed_base + cfg.seed * 1000003ULL + static_cast<std::uint64_t>(episode);
}

inline Agent make_agent(const Config &cfg) {
  return Agent(kStateDim, 6, cfg.sac, cfg.seed ^ 0x4147454e54ULL);
}

/// Single-learner SAC training: one rollout episode at a time, one update per
/// environment step once the warm-up is over.
class Trainer {
public:
  explicit Trainer(Config cfg)
      : cfg_(std::move(cfg)), agent_(make_agent(cfg_)),
        buffer_(static_cast<std::size_t>(cfg_.train.replay_capacity)),
        rng_(cfg_.seed ^ 0x5452414e4eULL) {}

  const Config &config() const { return cfg_; }
  Config &config() { return cfg_; }
  Agent &agent() { return agent_; }
  const Agent &agent() const { return agent_; }
  const ReplayBuffer &buffer() const { return buffer_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t episodes() const { return static_cast<std::int64_t>(log_.size()); }
  const std::vector<EpisodeLog> &log() const { return log_; }

  double terminal_rate(int window) const {
    const std::size_t n = std::min<std::size_t>(log_.size(), static_cast<std::size_t>(window));
    if (n == 0) return 0.0;
    int hits = 0;
    for (std::size_t i = log_.size() - n; i < log_.size(); ++i) hits += log_[i].terminal;
    return static_cast<double>(hits) / static_cast<double>(n);
  }

  EpisodeLog train_episode() {
    const std::int64_t ep = episodes();
    const std::uint64_t seed = training_rig_seed(cfg_, ep);
    const RigConfig rig = sample_rig(seed, cfg_.sim);
    Explorer explorer(*this);
    const EpisodeResult r = run_episode(explorer, rig, cfg_.sim, cfg_.episode, cfg_.mdp, seed,
                                        [this](const StepRecord &rec) { observe(rec); });
    EpisodeLog e;
    e.episode = ep;
    e.env_steps = env_steps_;
    e.episode_return = r.episode_return;
    e.steps = static_cast<int>(r.steps.size());
    e.terminal = r.terminal;
    if (r.terminal && r.calib) e.error_pct = r.calib->task_error_pct;
    log_.push_back(e);
    log_.back().terminal_rate = terminal_rate(cfg_.train.log_window);
    return log_.back();
  }

  /// Trains until at least `total_steps` environment steps have been taken.
  /// `on_episode` runs after every episode, e.g. for logging and checkpoints.
  void train(std::int64_t total_steps, const std::function<void(const EpisodeLog &)> &on_episode = {}) {
    while (env_steps_ < total_steps) {
      const EpisodeLog e = train_episode();
      if (on_episode) on_episode(e);
    }
  }

  void save(std::ostream &os) const {
    os.write(kCheckpointMagic, 4);
    io::write_pod(os, kCheckpointVersion);
    io::write_string(os, dump_config(cfg_));
    agent_.save(os);
    buffer_.save(os);
    io::write_string(os, rng_.state());
    io::write_pod(os, env_steps_);
    io::write_pod<std::uint64_t>(os, log_.size());
    for (const EpisodeLog &e : log_) {
      io::write_pod(os, e.episode);
      io::write_pod(os, e.env_steps);
      io::write_pod(os, e.episode_return);
      io::write_pod<std::int32_t>(os, e.steps);
      io::write_pod<std::uint8_t>(os, e.terminal);
      io::write_pod(os, e.terminal_rate);
      io::write_pod(os, e.error_pct);
    }
  }

  static Trainer load(std::istream &is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("not a checkpoint");
    const auto version = io::read_pod<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Trainer t(parse_config(io::read_string(is)));
    t.agent_.load(is);
    t.buffer_.load(is);
    t.rng_.set_state(io::read_string(is));
    t.env_steps_ = io::read_pod<std::int64_t>(is);
    const auto n = io::read_pod<std::uint64_t>(is);
    if (n > (1ull << 32)) throw CheckpointError("implausible episode count");
    t.log_.resize(n);
    for (EpisodeLog &e : t.log_) {
      e.episode = io::read_pod<std::int64_t>(is);
      e.env_steps = io::read_pod<std::int64_t>(is);
      e.episode_return = io::read_pod<double>(is);
      e.steps = io::read_pod<std::int32_t>(is);
      e.terminal = io::read_pod<std::uint8_t>(is) != 0;
      e.terminal_rate = io::read_pod<double>(is);
      e.error_pct = io::read_pod<double>(is);
    }
    return t;
  }

  void save_checkpoint(const std::string &path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw CheckpointError("cannot write " + tmp);
      save(os);
      if (!os) throw CheckpointError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  static Trainer load_checkpoint(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingCheckpoint("no checkpoint at " + path);
    return load(is);
  }

  bool operator==(const Trainer &o) const {
    return cfg_ == o.cfg_ && agent_ == o.agent_ && buffer_ == o.buffer_ && rng_ == o.rng_ &&
           env_steps_ == o.env_steps_ && log_ == o.log_;
  }

private:
  // Uniform actions during warm-up, then stochastic policy samples.
  class Explorer : public Policy {
  public:
    explicit Explorer(Trainer &t) : t_(t) {}
    std::string name() const override { return "train"; }
    Vec6 act(const StateVector &x, const CoverageState &, int) override {
      if (t_.env_steps_ < t_.cfg_.train.warmup) return baseline_random_moving(t_.rng_);
      return Vec6(t_.agent_.sample_action(x, t_.rng_).first);
    }

  private:
    Trainer &t_;
  };

  void observe(const StepRecord &rec) {
    buffer_.push({rec.state, rec.action, rec.reward, rec.next_state, rec.done});
    ++env_steps_;
    if (env_steps_ < cfg_.train.warmup || buffer_.size() < static_cast<std::size_t>(cfg_.sac.batch)) return;
    for (int i = 0; i < cfg_.train.updates_per_step; ++i) agent_.update(buffer_);
  }

  Config cfg_;
  Agent agent_;
  ReplayBuffer buffer_;
  Rng rng_;
  std::int64_t env_steps_ = 0;
  std::vector<EpisodeLog> log_;
};

inline void write_training_log_header(std::ostream &os) {
  os << "episode,env_steps,episode_return,steps,terminal,terminal_rate,error_pct\n";
}

inline void write_training_log_row(std::ostream &os, const EpisodeLog &e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%d,%d,%.17g,%.17g\n", static_cast<long long>(e.episode),
                static_cast<long long>(e.env_steps), e.episode_return, e.steps, e.terminal ? 1 : 0,
                e.terminal_rate, e.error_pct);
  os << buf;
}

} // namespace vical

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "vical/nn.hpp"
#include "vical/se3.hpp"

namespace vical {

// ---------------------------------------------------------------------------
// Replay buffer

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action; // in [-1, 1]
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false; // terminal condition, not timeout
};

class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition &operator[](std::size_t i) const { return data_[i]; }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  /// Uniform sampling with replacement; returns storage indices.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng &rng) const {
    if (data_.empty()) throw EmptyBuffer("cannot sample an empty replay buffer");
    std::vector<std::size_t> idx(n);
    for (auto &i : idx) i = rng.index(data_.size());
    return idx;
  }

  std::vector<Transition> sample(std::size_t n, Rng &rng) const {
    std::vector<Transition> out;
    for (std::size_t i : sample_indices(n, rng)) out.push_back(data_[i]);
    return out;
  }

  void save(std::ostream &os) const {
    io::write_pod<std::uint64_t>(os, capacity_);
    io::write_pod<std::uint64_t>(os, next_);
    io::write_pod<std::uint64_t>(os, data_.size());
    for (const Transition &t : data_) {
      io::write_dense(os, t.state);
      io::write_dense(os, t.action);
      io::write_pod(os, t.reward);
      io::write_dense(os, t.next_state);
      io::write_pod<std::uint8_t>(os, t.done);
    }
  }

  void load(std::istream &is) {
    capacity_ = io::read_pod<std::uint64_t>(is);
    next_ = io::read_pod<std::uint64_t>(is);
    const auto n = io::read_pod<std::uint64_t>(is);
    if (capacity_ == 0 || n > capacity_) throw CheckpointError("bad replay header");
    data_.assign(n, Transition{});
    for (Transition &t : data_) {
      io::read_dense(is, t.state);
      io::read_dense(is, t.action);
      t.reward = io::read_pod<double>(is);
      io::read_dense(is, t.next_state);
      t.done = io::read_pod<std::uint8_t>(is) != 0;
    }
  }

  bool operator==(const ReplayBuffer &o) const {
    if (capacity_ != o.capacity_ || next_ != o.next_ || data_.size() != o.data_.size()) return false;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const Transition &a = data_[i], &b = o.data_[i];
      if (a.state != b.state || a.action != b.action || a.reward != b.reward ||
          a.next_state != b.next_state || a.done != b.done) {
        return false;
      }
    }
    return true;
  }

private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// Action scaling

/// Maps a in [-1, 1]^6 onto the action box.
inline Action action_to_env(const Eigen::Matrix<double, 6, 1> &a, const ActionBounds &b = {}) {
  Action out;
  out.rho = b.rho_max * (a[0] + 1.0) / 2.0;
  out.theta = kPi * (a[1] + 1.0);
  out.phi = kPi * (a[2] + 1.0) / 2.0;
  out.alpha = b.rot_max * a[3];
  out.beta = b.rot_max * a[4];
  out.gamma = b.rot_max * a[5];
  return out;
}

inline Eigen::Matrix<double, 6, 1> env_to_action(const Action &x, const ActionBounds &b = {}) {
  Eigen::Matrix<double, 6, 1> a;
  a << 2.0 * x.rho / b.rho_max - 1.0, x.theta / kPi - 1.0, 2.0 * x.phi / kPi - 1.0,
      x.alpha / b.rot_max, x.beta / b.rot_max, x.gamma / b.rot_max;
  return a;
}

// ---------------------------------------------------------------------------
// Soft actor-critic with a state-value network and twin Q functions

struct SacConfig {
  int hidden = 256;
  int hidden_layers = 2;
  double alpha = 0.2; // initial value when auto_alpha is on
  // Tune alpha towards a target policy entropy of target_entropy_per_dim * action_dim.
  bool auto_alpha = true;
  double target_entropy_per_dim = -1.0;
  double gamma = 0.99;
  double tau = 0.001;
  AdamConfig adam{1e-4};
  int batch = 256;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};

inline constexpr double kSquashEps = 1e-6;

template <class S> struct SacBatch {
  Matrix<S> s, a, r, s2, done; // features x batch; r and done are 1 x batch

  static SacBatch from(const std::vector<Transition> &ts) {
    SacBatch b;
    const auto n = static_cast<Eigen::Index>(ts.size());
    const auto sd = ts.front().state.size(), ad = ts.front().action.size();
    b.s.resize(sd, n), b.a.resize(ad, n), b.r.resize(1, n), b.s2.resize(sd, n), b.done.resize(1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Transition &t = ts[j];
      b.s.col(j) = t.state.cast<S>();
      b.a.col(j) = t.action.cast<S>();
      b.r(0, j) = static_cast<S>(t.reward);
      b.s2.col(j) = t.next_state.cast<S>();
      b.done(0, j) = t.done ? S(1) : S(0);
    }
    return b;
  }
};

/// Tanh-squashed Gaussian evaluated with fixed standard-normal noise eps.
template <class S> struct PolicyEval {
  MlpCache<S> cache;
  Matrix<S> mu, log_std, std, eps, a, logp; // logp is 1 x batch
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
};

template <class S> struct SacLosses {
  double value = 0.0, q1 = 0.0, q2 = 0.0, policy = 0.0;
  double mean_logp = 0.0, mean_q = 0.0;
};

template <class S> struct SacGrads {
  MlpGrad<S> policy, q1, q2, value;
};

template <class S> class SacAgent {
public:
  SacAgent() = default;

  SacAgent(int state_dim, int action_dim, SacConfig cfg, std::uint64_t seed)
      : cfg_(cfg), state_dim_(state_dim), action_dim_(action_dim), rng_(seed) {
    auto widths = [&](int in, int out) {
      std::vector<int> w{in};
      for (int i = 0; i < cfg_.hidden_layers; ++i) w.push_back(cfg_.hidden);
      w.push_back(out);
      return w;
    };
    policy_ = Mlp<S>(widths(state_dim, 2 * action_dim), rng_);
    q1_ = Mlp<S>(widths(state_dim + action_dim, 1), rng_);
    q2_ = Mlp<S>(widths(state_dim + action_dim, 1), rng_);
    v_ = Mlp<S>(widths(state_dim, 1), rng_);
    v_target_ = v_;
    opt_policy_ = Adam<S>(policy_, cfg_.adam);
    opt_q1_ = Adam<S>(q1_, cfg_.adam);
    opt_q2_ = Adam<S>(q2_, cfg_.adam);
    opt_v_ = Adam<S>(v_, cfg_.adam);
    log_alpha_ = std::log(cfg_.alpha);
  }

  const SacConfig &config() const { return cfg_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  Mlp<S> &policy() { return policy_; }
  Mlp<S> &q1() { return q1_; }
  Mlp<S> &q2() { return q2_; }
  Mlp<S> &value() { return v_; }
  Mlp<S> &value_target() { return v_target_; }
  const Mlp<S> &policy() const { return policy_; }
  Rng &rng() { return rng_; }
  std::int64_t updates() const { return updates_; }
  double alpha() const { return cfg_.auto_alpha ? std::exp(log_alpha_) : cfg_.alpha; }

  PolicyEval<S> evaluate_policy(const Matrix<S> &states, const Matrix<S> &eps) const {
    PolicyEval<S> pe;
    const Matrix<S> out = policy_.forward(states, &pe.cache);
    const int d = action_dim_;
    pe.mu = out.topRows(d);
    const Matrix<S> raw = out.bottomRows(d);
    const S lo = static_cast<S>(cfg_.log_std_min), hi = static_cast<S>(cfg_.log_std_max);
    pe.log_std = raw.cwiseMax(lo).cwiseMin(hi);
    pe.clamped = (raw.array() < lo) || (raw.array() > hi);
    pe.std = pe.log_std.array().exp().matrix();
    pe.eps = eps;
    const Matrix<S> u = pe.mu + pe.std.cwiseProduct(eps);
    pe.a = u.array().tanh().matrix();
    const S half_log_2pi = static_cast<S>(0.5 * std::log(2.0 * kPi));
    const Matrix<S> per = (S(-0.5) * eps.array().square() - pe.log_std.array() - half_log_2pi -
                           (S(1) - pe.a.array().square() + static_cast<S>(kSquashEps)).log())
                              .matrix();
    pe.logp = per.colwise().sum();
    return pe;
  }

  /// Stochastic action for one state; returns (action, log_prob).
  std::pair<Eigen::VectorXd, double> sample_action(const Eigen::VectorXd &state, Rng &rng) const {
    Matrix<S> eps(action_dim_, 1);
    for (int i = 0; i < action_dim_; ++i) eps(i, 0) = static_cast<S>(rng.normal());
    const PolicyEval<S> pe = evaluate_policy(state.cast<S>(), eps);
    return {pe.a.col(0).template cast<double>(), static_cast<double>(pe.logp(0, 0))};
  }

  /// tanh of the policy mean.
  Eigen::VectorXd mean_action(const Eigen::VectorXd &state) const {
    const Matrix<S> out = policy_.forward(state.cast<S>());
    return out.topRows(action_dim_).array().tanh().matrix().col(0).template cast<double>();
  }

  /// Losses and gradients for all three objectives at the current
  /// parameters, with reparameterization noise eps (action_dim x batch).
  SacLosses<S> losses(const SacBatch<S> &b, const Matrix<S> &eps, SacGrads<S> *grads) const {
    const auto n = b.s.cols();
    const S inv_n = S(1) / static_cast<S>(n);
    const S alpha = static_cast<S>(this->alpha());
    SacLosses<S> L;

    const PolicyEval<S> pe = evaluate_policy(b.s, eps);
    Matrix<S> sa_pi(state_dim_ + action_dim_, n);
    sa_pi << b.s, pe.a;
    MlpCache<S> c1pi, c2pi;
    const Matrix<S> q1pi = q1_.forward(sa_pi, &c1pi), q2pi = q2_.forward(sa_pi, &c2pi);
    const Matrix<S> qmin = q1pi.cwiseMin(q2pi);

    // Value: regress V(s) onto min Q(s, a~) - alpha log pi(a~|s).
    MlpCache<S> cv;
    const Matrix<S> v = v_.forward(b.s, &cv);
    const Matrix<S> v_tgt = qmin - alpha * pe.logp;
    const Matrix<S> dv = (v - v_tgt) * inv_n;
    L.value = 0.5 * static_cast<double>((v - v_tgt).squaredNorm()) / static_cast<double>(n);

    // Q: regress onto r + gamma (1 - done) V_target(s').
    const Matrix<S> v_next = v_target_.forward(b.s2);
    const Matrix<S> y =
        b.r + static_cast<S>(cfg_.gamma) * (Matrix<S>::Ones(1, n) - b.done).cwiseProduct(v_next);
    Matrix<S> sa(state_dim_ + action_dim_, n);
    sa << b.s, b.a;
    MlpCache<S> c1, c2;
    const Matrix<S> q1 = q1_.forward(sa, &c1), q2 = q2_.forward(sa, &c2);
    L.q1 = 0.5 * static_cast<double>((q1 - y).squaredNorm()) / static_cast<double>(n);
    L.q2 = 0.5 * static_cast<double>((q2 - y).squaredNorm()) / static_cast<double>(n);

    // Policy: E[alpha log pi(a~|s) - min Q(s, a~)].
    L.policy = static_cast<double>((alpha * pe.logp - qmin).sum() * inv_n);
    L.mean_logp = static_cast<double>(pe.logp.mean());
    L.mean_q = static_cast<double>(qmin.mean());

    if (!grads) return L;
    grads->value = v_.backward(cv, dv);
    grads->q1 = q1_.backward(c1, (q1 - y) * inv_n);
    grads->q2 = q2_.backward(c2, (q2 - y) * inv_n);

    // d min(Q1, Q2) / d a~ through whichever critic is smaller per sample.
    const Matrix<S> pick1 = (q1pi.array() <= q2pi.array()).template cast<S>().matrix();
    const Matrix<S> pick2 = Matrix<S>::Ones(1, n) - pick1;
    Matrix<S> dx1, dx2;
    q1_.backward(c1pi, pick1, &dx1);
    q2_.backward(c2pi, pick2, &dx2);
    const Matrix<S> dq_da = (dx1 + dx2).bottomRows(action_dim_);

    const auto a2 = pe.a.array().square();
    const auto one_minus = S(1) - a2;
    const Matrix<S> dlogp_du_squash =
        (S(2) * pe.a.array() * one_minus / (one_minus + static_cast<S>(kSquashEps))).matrix();
    const Matrix<S> dL_du =
        (alpha * dlogp_du_squash.array() - dq_da.array() * one_minus).matrix() * inv_n;
    Matrix<S> dL_dls = (dL_du.array() * pe.std.array() * pe.eps.array() - alpha * inv_n).matrix();
    dL_dls = pe.clamped.select(Matrix<S>::Zero(action_dim_, n), dL_dls);
    Matrix<S> dout(2 * action_dim_, n);
    dout << dL_du, dL_dls;
    grads->policy = policy_.backward(pe.cache, dout);
    return L;
  }

  Matrix<S> draw_noise(Eigen::Index n) {
    Matrix<S> eps(action_dim_, n);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<S>(rng_.normal());
    return eps;
  }

  /// One gradient step on every network followed by the target update.
  SacLosses<S> update(const SacBatch<S> &b) {
    const Matrix<S> eps = draw_noise(b.s.cols());
    SacGrads<S> g;
    const SacLosses<S> L = losses(b, eps, &g);
    opt_v_.step(v_, g.value);
    opt_q1_.step(q1_, g.q1);
    opt_q2_.step(q2_, g.q2);
    opt_policy_.step(policy_, g.policy);
    polyak_update(v_target_, v_, cfg_.tau);
    if (cfg_.auto_alpha) step_alpha(L.mean_logp);
    ++updates_;
    return L;
  }

  SacLosses<S> update(const ReplayBuffer &buffer) {
    return update(SacBatch<S>::from(buffer.sample(static_cast<std::size_t>(cfg_.batch), rng_)));
  }

  bool all_finite() const {
    return policy_.all_finite() && q1_.all_finite() && q2_.all_finite() && v_.all_finite() &&
           v_target_.all_finite();
  }

  void save(std::ostream &os) const {
    io::write_pod(os, cfg_);
    io::write_pod<std::int32_t>(os, state_dim_);
    io::write_pod<std::int32_t>(os, action_dim_);
    io::write_pod<std::int64_t>(os, updates_);
    io::write_string(os, rng_.state());
    for (const Mlp<S> *m : {&policy_, &q1_, &q2_, &v_, &v_target_}) m->save(os);
    for (const Adam<S> *o : {&opt_policy_, &opt_q1_, &opt_q2_, &opt_v_}) o->save(os);
    io::write_pod(os, log_alpha_);
    io::write_pod(os, alpha_m_);
    io::write_pod(os, alpha_v_);
  }

  void load(std::istream &is) {
    cfg_ = io::read_pod<SacConfig>(is);
    state_dim_ = io::read_pod<std::int32_t>(is);
    action_dim_ = io::read_pod<std::int32_t>(is);
    updates_ = io::read_pod<std::int64_t>(is);
    rng_.set_state(io::read_string(is));
    for (Mlp<S> *m : {&policy_, &q1_, &q2_, &v_, &v_target_}) m->load(is);
    for (Adam<S> *o : {&opt_policy_, &opt_q1_, &opt_q2_, &opt_v_}) o->load(is);
    log_alpha_ = io::read_pod<double>(is);
    alpha_m_ = io::read_pod<double>(is);
    alpha_v_ = io::read_pod<double>(is);
  }

  bool operator==(const SacAgent &o) const {
    return state_dim_ == o.state_dim_ && action_dim_ == o.action_dim_ && updates_ == o.updates_ &&
           rng_ == o.rng_ && policy_ == o.policy_ && q1_ == o.q1_ && q2_ == o.q2_ &&
           v_ == o.v_ && v_target_ == o.v_target_ && opt_policy_ == o.opt_policy_ &&
           opt_q1_ == o.opt_q1_ && opt_q2_ == o.opt_q2_ && opt_v_ == o.opt_v_ &&
           log_alpha_ == o.log_alpha_ && alpha_m_ == o.alpha_m_ && alpha_v_ == o.alpha_v_;
  }

private:
  /// Adam step on log(alpha) for J = -log(alpha) (log pi + target entropy).
  void step_alpha(double mean_logp) {
    const double g = -(mean_logp + cfg_.target_entropy_per_dim * action_dim_);
    const auto &a = cfg_.adam;
    const double t = static_cast<double>(updates_ + 1);
    alpha_m_ = a.beta1 * alpha_m_ + (1 - a.beta1) * g;
    alpha_v_ = a.beta2 * alpha_v_ + (1 - a.beta2) * g * g;
    const double mhat = alpha_m_ / (1 - std::pow(a.beta1, t)), vhat = alpha_v_ / (1 - std::pow(a.beta2, t));
    log_alpha_ -= a.lr * mhat / (std::sqrt(vhat) + a.eps);
  }

  SacConfig cfg_;
  int state_dim_ = 0, action_dim_ = 0;
  Rng rng_;
  Mlp<S> policy_, q1_, q2_, v_, v_target_;
  Adam<S> opt_policy_, opt_q1_, opt_q2_, opt_v_;
  std::int64_t updates_ = 0;
  double log_alpha_ = 0.0, alpha_m_ = 0.0, alpha_v_ = 0.0;
};

} // namespace vical

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "vical/errors.hpp"
#include "vical/rng.hpp"

namespace vical {

template <class S> using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Binary serialization helpers (little-endian host assumed)

namespace io {

template <class T> void write_pod(std::ostream &os, const T &v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T> T read_pod(std::istream &is) {
  T v{};
  is.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!is) throw CheckpointError("truncated stream");
  return v;
}

inline void write_string(std::ostream &os, const std::string &s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream &is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (1ull << 32)) throw CheckpointError("implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("truncated stream");
  return s;
}

template <class Derived> void write_dense(std::ostream &os, const Eigen::PlainObjectBase<Derived> &m) {
  write_pod<std::int64_t>(os, m.rows());
  write_pod<std::int64_t>(os, m.cols());
  os.write(reinterpret_cast<const char *>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(typename Derived::Scalar)));
}

template <class Derived> void read_dense(std::istream &is, Eigen::PlainObjectBase<Derived> &m) {
  const auto r = read_pod<std::int64_t>(is), c = read_pod<std::int64_t>(is);
  if (r < 0 || c < 0 || r * c > (1ll << 32)) throw CheckpointError("implausible matrix shape");
  m.resize(r, c);
  is.read(reinterpret_cast<char *>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(typename Derived::Scalar)));
  if (!is) throw CheckpointError("truncated stream");
}

} // namespace io

// ---------------------------------------------------------------------------
// Multilayer perceptron: affine layers, ReLU between them, linear output.
// Batched: inputs and outputs are (features x batch).

template <class S> struct MlpGrad {
  std::vector<Matrix<S>> W;
  std::vector<Vector<S>> b;

  void set_zero_like(const std::vector<Matrix<S>> &Ws, const std::vector<Vector<S>> &bs) {
    W.resize(Ws.size());
    b.resize(bs.size());
    for (std::size_t l = 0; l < Ws.size(); ++l) {
      W[l].setZero(Ws[l].rows(), Ws[l].cols());
      b[l].setZero(bs[l].size());
    }
  }
  MlpGrad &operator+=(const MlpGrad &o) {
    for (std::size_t l = 0; l < W.size(); ++l) W[l] += o.W[l], b[l] += o.b[l];
    return *this;
  }
};

template <class S> struct MlpCache {
  std::vector<Matrix<S>> a; // a[0] = input, a[l+1] = output of layer l (post-activation)
};

template <class S> class Mlp {
public:
  Mlp() = default;

  /// Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); same for biases.
  Mlp(std::vector<int> widths, Rng &rng) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("mlp needs at least 2 widths");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const int in = widths_[l], out = widths_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Matrix<S> w(out, in);
      Vector<S> bias(out);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
      for (Eigen::Index i = 0; i < bias.size(); ++i) bias[i] = static_cast<S>(rng.uniform(-bound, bound));
      W_.push_back(std::move(w));
      b_.push_back(std::move(bias));
    }
  }

  const std::vector<int> &widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  std::size_t layers() const { return W_.size(); }
  std::vector<Matrix<S>> &W() { return W_; }
  std::vector<Vector<S>> &b() { return b_; }
  const std::vector<Matrix<S>> &W() const { return W_; }
  const std::vector<Vector<S>> &b() const { return b_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  Matrix<S> forward(const Matrix<S> &x, MlpCache<S> *cache = nullptr) const {
    Matrix<S> a = x;
    if (cache) {
      cache->a.clear();
      cache->a.push_back(x);
    }
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix<S> z = W_[l] * a;
      z.colwise() += b_[l];
      if (l + 1 < W_.size()) z = z.cwiseMax(S(0));
      a = std::move(z);
      if (cache) cache->a.push_back(a);
    }
    return a;
  }

  /// Parameter gradients for upstream dL/dy; optionally dL/dx.
  MlpGrad<S> backward(const MlpCache<S> &cache, const Matrix<S> &dy,
                      Matrix<S> *dx = nullptr) const {
    MlpGrad<S> g;
    g.W.resize(W_.size());
    g.b.resize(b_.size());
    Matrix<S> delta = dy;
    for (std::size_t l = W_.size(); l-- > 0;) {
      if (l + 1 < W_.size()) {
        // ReLU derivative on this layer's output.
        delta = delta.cwiseProduct((cache.a[l + 1].array() > S(0)).template cast<S>().matrix());
      }
      g.W[l].noalias() = delta * cache.a[l].transpose();
      g.b[l] = delta.rowwise().sum();
      if (l > 0 || dx) {
        Matrix<S> prev = W_[l].transpose() * delta;
        delta = std::move(prev);
      }
    }
    if (dx) *dx = std::move(delta);
    return g;
  }

  /// theta <- (1 - tau) theta + tau * other
  void polyak_from(const Mlp &online, double tau) {
    const S t = static_cast<S>(tau), k = static_cast<S>(1.0 - tau);
    for (std::size_t l = 0; l < W_.size(); ++l) {
      W_[l] = k * W_[l] + t * online.W_[l];
      b_[l] = k * b_[l] + t * online.b_[l];
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      if (!W_[l].allFinite() || !b_[l].allFinite()) return false;
    }
    return true;
  }

  bool operator==(const Mlp &o) const {
    if (widths_ != o.widths_) return false;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      if (W_[l] != o.W_[l] || b_[l] != o.b_[l]) return false;
    }
    return true;
  }

  void save(std::ostream &os) const {
    io::write_pod<std::uint64_t>(os, widths_.size());
    for (int w : widths_) io::write_pod<std::int32_t>(os, w);
    for (std::size_t l = 0; l < W_.size(); ++l) {
      io::write_dense(os, W_[l]);
      io::write_dense(os, b_[l]);
    }
  }

  void load(std::istream &is) {
    const auto n = io::read_pod<std::uint64_t>(is);
    if (n < 2 || n > 64) throw CheckpointError("bad layer count");
    widths_.resize(n);
    for (auto &w : widths_) w = io::read_pod<std::int32_t>(is);
    W_.resize(n - 1);
    b_.resize(n - 1);
    for (std::size_t l = 0; l + 1 < n; ++l) {
      io::read_dense(is, W_[l]);
      io::read_dense(is, b_[l]);
      if (W_[l].rows() != widths_[l + 1] || W_[l].cols() != widths_[l] ||
          b_[l].size() != widths_[l + 1]) {
        throw CheckpointError("layer shape mismatch");
      }
    }
  }

private:
  std::vector<int> widths_;
  std::vector<Matrix<S>> W_;
  std::vector<Vector<S>> b_;
};

template <class S> void polyak_update(Mlp<S> &target, const Mlp<S> &online, double tau) {
  target.polyak_from(online, tau);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S> class Adam {
public:
  Adam() = default;
  Adam(const Mlp<S> &net, AdamConfig cfg) : cfg_(cfg) {
    m_.set_zero_like(net.W(), net.b());
    v_.set_zero_like(net.W(), net.b());
  }

  void step(Mlp<S> &net, const MlpGrad<S> &g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S step = static_cast<S>(cfg_.lr / c1), sc2 = static_cast<S>(1.0 / c2);
    const S eps = static_cast<S>(cfg_.eps);
    auto update = [&](auto &p, auto &m, auto &v, const auto &grad) {
      m = b1 * m + (S(1) - b1) * grad;
      v = b2 * v + (S(1) - b2) * grad.cwiseProduct(grad);
      p.array() -= step * m.array() / ((v.array() * sc2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
      update(net.W()[l], m_.W[l], v_.W[l], g.W[l]);
      update(net.b()[l], m_.b[l], v_.b[l], g.b[l]);
    }
  }

  std::int64_t steps() const { return t_; }

  void save(std::ostream &os) const {
    io::write_pod(os, cfg_);
    io::write_pod(os, t_);
    io::write_pod<std::uint64_t>(os, m_.W.size());
    for (std::size_t l = 0; l < m_.W.size(); ++l) {
      io::write_dense(os, m_.W[l]);
      io::write_dense(os, m_.b[l]);
      io::write_dense(os, v_.W[l]);
      io::write_dense(os, v_.b[l]);
    }
  }

  void load(std::istream &is) {
    cfg_ = io::read_pod<AdamConfig>(is);
    t_ = io::read_pod<std::int64_t>(is);
    const auto n = io::read_pod<std::uint64_t>(is);
    if (n > 64) throw CheckpointError("bad layer count");
    m_.W.resize(n), m_.b.resize(n), v_.W.resize(n), v_.b.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
      io::read_dense(is, m_.W[l]);
      io::read_dense(is, m_.b[l]);
      io::read_dense(is, v_.W[l]);
      io::read_dense(is, v_.b[l]);
    }
  }

  bool operator==(const Adam &o) const {
    if (t_ != o.t_ || m_.W.size() != o.m_.W.size()) return false;
    for (std::size_t l = 0; l < m_.W.size(); ++l) {
      if (m_.W[l] != o.m_.W[l] || m_.b[l] != o.m_.b[l] || v_.W[l] != o.v_.W[l] ||
          v_.b[l] != o.v_.b[l]) {
        return false;
      }
    }
    return true;
  }

private:
  AdamConfig cfg_;
  MlpGrad<S> m_, v_;
  std::int64_t t_ = 0;
};

} // namespace vical

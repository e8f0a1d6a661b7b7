#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace vical {

/// Seeded generator with stateless draws, so the full state is the engine state.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (stddev == 0.0) return mean;
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }

  /// Uniform in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Derives an independent child seed.
  std::uint64_t split() { return engine_() ^ 0x9E3779B97F4A7C15ULL; }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string &s) {
    std::istringstream is(s);
    is >> engine_;
  }

  std::mt19937_64 &engine() { return engine_; }

  friend bool operator==(const Rng &a, const Rng &b) { return a.engine_ == b.engine_; }

private:
  std::mt19937_64 engine_;
};

} // namespace vical

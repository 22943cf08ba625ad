#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string_view>

namespace destnet {

/// FNV-1a 64-bit hash; stable across platforms, used for config hashes and
/// seed derivation.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

/// Seeded random stream. All randomness in the library flows through one of
/// these so that a run is reproducible from its seed alone. Distribution
/// draws construct a fresh distribution object per call, so the engine state
/// is the entire stream state (and is what gets checkpointed).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  /// Derive an independent stream for a named purpose. Advances this stream.
  Rng fork(std::string_view tag) {
    return Rng(next_u64() ^ fnv1a64(tag));
  }

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);
  std::string state_string() const;
  void set_state_string(const std::string& s);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace destnet

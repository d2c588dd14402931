#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace metastack {

/// Deterministic random stream. Uniform/normal draws are generated from the
/// raw engine output directly (not std distributions) so results are
/// portable across standard library implementations.
class RngStream {
 public:
  RngStream() : engine_(0) {}
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (two uniforms per draw, no cache).
  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::string serialize() const;
  static RngStream deserialize(const std::string& state);

  bool operator==(const RngStream& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Root generator: every component derives its stream from the run seed and
/// a fixed label, so adding a consumer never perturbs the others' draws.
class RootRng {
 public:
  explicit RootRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }
  RngStream stream(const std::string& label) const;

 private:
  std::uint64_t seed_;
};

}  // namespace metastack

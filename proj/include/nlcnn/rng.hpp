#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace nlcnn {

/// Deterministic random stream backed by std::mt19937_64.
///
/// The engine's output sequence is fixed by the C++ standard. The
/// std::*_distribution adaptors are not, so every derived quantity (uniform
/// reals, normals, bounded integers) is computed here from raw engine words.
/// A given seed yields the same stream on every conforming platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform in [lo, hi]; returns lo when lo == hi.
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream; identical (seed, stream_id) pairs give identical children.
  SeededRng derive(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace nlcnn

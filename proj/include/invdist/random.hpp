#pragma once

#include <cstdint>
#include <random>

namespace invdist {

/// SplitMix64 finalizer. Used as the counter-based hash that turns
/// (master seed, stream index) into independent engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`: splitmix64(master ^ splitmix64(index)).
/// Depends only on (master, index), so replica streams are independent of how
/// replicas are scheduled onto threads.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// A single random stream. Copying it copies the stream position.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : engine_(seed) {}

  /// Child stream `index` of this stream's seed.
  static RandomStream substream(std::uint64_t master, std::uint64_t index) {
    return RandomStream(derive_seed(master, index));
  }

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  /// Uniform on (0, 1).
  double uniform_open();
  /// Exponential with the given rate (> 0).
  double exponential(double rate);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace invdist

#pragma once

#include <cstdint>
#include <random>

namespace plm {

// All randomness in a run funnels through one root seed. Independent purposes
// (data generation, augmentation sampling, weight init, eval) draw from
// separate streams derived by mixing fixed purpose tags into the seed, so a
// change in how one subsystem consumes randomness never reshuffles another.
enum class RngStream : std::uint64_t {
  kData = 0x9e3779b97f4a7c15ull,
  kAug = 0xbf58476d1ce4e5b9ull,
  kInit = 0x94d049bb133111ebull,
  kBatch = 0xd6e8feb86659fd93ull,
  kWarmup = 0xa5a5a5a55a5a5a5aull,
  kEval = 0xc2b2ae3d27d4eb4full,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, RngStream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(stream)) + index);
}

// Deterministic generator over a (seed, stream, index) triple. Values are
// produced by hand from raw 64-bit draws so sequences are identical across
// standard library implementations.
class Rng {
 public:
  Rng(std::uint64_t seed, RngStream stream, std::uint64_t index = 0)
      : engine_(derive_seed(seed, stream, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace plm

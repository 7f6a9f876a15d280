#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace nmtk {

// Deterministic, platform-independent randomness. Every random decision in the
// toolkit (parameter init, dropout masks, shuffles, sampling) flows through
// these helpers so that a fixed seed fixes the whole run bit-for-bit. The
// standard <random> distributions are avoided on purpose: their sequences are
// implementation-defined.

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double u01_from_bits(uint64_t bits) {
  // 53-bit mantissa, uniform in [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Stateless per-element hash: (seed, block, index) -> uniform u64. Used by
// dropout and noise so a mask is a pure function of the seed and a block id.
inline uint64_t element_bits(uint64_t seed, uint64_t block, uint64_t index) {
  return mix64(seed ^ mix64(block ^ mix64(index)));
}

inline double element_u01(uint64_t seed, uint64_t block, uint64_t index) {
  return u01_from_bits(element_bits(seed, block, index));
}

// Hands out one block id per consumer call. The block counter is part of the
// training state, so resuming from a checkpoint replays the exact masks an
// uninterrupted run would have drawn.
struct RngCounter {
  uint64_t seed = 0;
  uint64_t next_block_id = 0;

  uint64_t next_block() { return next_block_id++; }
};

// Sequential splitmix64 stream, independent per (seed, stream_id).
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream_id)
      : state_(mix64(seed ^ mix64(stream_id ^ 0xa5a5a5a5a5a5a5a5ULL))) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  double next_u01() { return u01_from_bits(next_u64()); }

  uint64_t next_below(uint64_t bound) { return bound ? next_u64() % bound : 0; }

  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller; u1 shifted away from zero so log() is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_u01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fisher-Yates with our own stream; std::shuffle's ordering is not portable.
template <typename T>
void shuffle_in_place(std::vector<T>& items, RngStream& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace nmtk

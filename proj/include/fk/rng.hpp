#pragma once

// Counter-based RNG streams. Every (replicate, time, particle, phase) tuple
// maps to an independent stream derived from one 64-bit master seed, so
// results do not depend on thread count or scheduling. Gaussians use the
// Marsaglia polar method (sqrt + log only; no trig, no libm sequences),
// keeping draws bit-identical across platforms.

#include <cstdint>

#include "fk/common.hpp"

namespace fk {

namespace detail {

// SplitMix64 finalizer; also the per-stream generator step.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  h += 0x9E3779B97F4A7C15ull;
  return mix64(h ^ (v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2)));
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::mix64(state_);
  }

  // uniform in [0, 1), 53-bit resolution
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in (0, 1); safe to take logs of
  double next_open() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  // standard normal, Marsaglia polar
  double next_gaussian() {
    for (;;) {
      double u = 2.0 * next_unit() - 1.0;
      double v = 2.0 * next_unit() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * portable_log(s) / s);
      }
    }
  }

  // fills out[0..n), consuming pairs where possible
  void fill_gaussian(double* out, std::size_t n) {
    std::size_t i = 0;
    while (i < n) {
      double u, v, s;
      do {
        u = 2.0 * next_unit() - 1.0;
        v = 2.0 * next_unit() - 1.0;
        s = u * u + v * v;
      } while (!(s > 0.0 && s < 1.0));
      double r = std::sqrt(-2.0 * portable_log(s) / s);
      out[i++] = u * r;
      if (i < n) out[i++] = v * r;
    }
  }

 private:
  std::uint64_t state_;
};

enum class RngPhase : std::uint64_t {
  Init = 1,
  Resample = 2,
  Mutate = 3,
  Simulate = 4,
  Aux = 5,
};

struct RngPolicy {
  std::uint64_t master_seed{0};

  RngStream stream(std::uint64_t replicate, std::uint64_t time,
                   std::uint64_t particle, RngPhase phase) const {
    std::uint64_t h = detail::combine(0x243F6A8885A308D3ull, master_seed);
    h = detail::combine(h, replicate);
    h = detail::combine(h, time);
    h = detail::combine(h, particle);
    h = detail::combine(h, static_cast<std::uint64_t>(phase));
    return RngStream(h);
  }
};

}  // namespace fk

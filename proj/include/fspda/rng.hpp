#pragma once

#include <cstdint>
#include <cmath>

namespace fspda {

// Keyed counter-based generator built on the SplitMix64 finalizer.
// A stream is identified by (seed, up to three tag words); draws are a pure
// function of (key, counter), so any stream position can be replayed out of
// order — the async runtime and the two-pass Monte Carlo estimators rely on
// this.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  CounterRng() = default;

  static CounterRng keyed(std::uint64_t seed, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0) {
    CounterRng r;
    std::uint64_t h = finalize(seed + kGolden);
    h = finalize(h ^ (a + kGolden));
    h = finalize(h ^ (b + kGolden));
    h = finalize(h ^ (c + kGolden));
    r.key_ = h;
    return r;
  }

  std::uint64_t next_u64() { return finalize(key_ + (++counter_) * kGolden); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t v = next_u64();
      if (v >= threshold) return v % n;
    }
  }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  // SplitMix64 output mix (Stafford variant 13).
  static std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Stream salts so independent uses of the same (seed, t) never collide.
namespace rng_salt {
inline constexpr std::uint64_t kEdgeChoice = 0xE5;
inline constexpr std::uint64_t kCoordMask = 0xC0;
inline constexpr std::uint64_t kGradNoise = 0x6D;
inline constexpr std::uint64_t kAsyncMask = 0xA5;
inline constexpr std::uint64_t kInit = 0x11;
inline constexpr std::uint64_t kEvents = 0xEE;
inline constexpr std::uint64_t kData = 0xDA;
}  // namespace rng_salt

}  // namespace fspda

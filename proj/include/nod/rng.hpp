#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace nod {

// xoshiro256++ generator. Every random draw in the project goes through this
// class so that runs are reproducible bit-for-bit across platforms and
// standard-library implementations. Streams for (iteration, slot) pairs are
// derived with `stream`, which makes training state a pure function of
// (seed, iteration) and keeps resumption exact.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  static Rng from_state(const std::array<uint64_t, 4>& state) {
    Rng r(0);
    r.s_ = state;
    return r;
  }

  // Derives an independent child stream from a root seed and up to three
  // coordinates (e.g. phase, iteration, batch slot).
  static Rng stream(uint64_t root, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    uint64_t x = root;
    uint64_t h = splitmix64(x);
    x ^= a + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(x);
    x ^= b + 0xbf58476d1ce4e5b9ULL;
    h ^= splitmix64(x);
    x ^= c + 0x94d049bb133111ebULL;
    h ^= splitmix64(x);
    return Rng(h);
  }

  const std::array<uint64_t, 4>& state() const { return s_; }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 significant bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi], both ends inclusive. Unbiased.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full span
    // Lemire's multiply-shift rejection method.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * range;
    uint64_t l = static_cast<uint64_t>(m);
    if (l < range) {
      const uint64_t t = (0 - range) % range;
      while (l < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * range;
        l = static_cast<uint64_t>(m);
      }
    }
    return lo + static_cast<int64_t>(m >> 64);
  }

  // Standard normal via Box-Muller. Consumes two uniforms per draw; the sine
  // partner is discarded so the generator state stays a plain counter.
  double normal() {
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<uint64_t, 4> s_{};
};

}  // namespace nod

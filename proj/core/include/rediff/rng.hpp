#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

#include "rediff/vec.hpp"

namespace rediff {

/// splitmix64 finalizer; used to derive stream identities from key tuples.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Tags keep logically distinct stream families disjoint even when their
/// numeric indices coincide.
enum class StreamTag : std::uint64_t {
  drift_field = 0x01,
  sigma_field = 0x02,
  trajectory = 0x03,
  segment = 0x04,
  permutation = 0x05,
  bootstrap = 0x06,
  synthetic = 0x07,
  endpoint = 0x08,
};

/// Counter-based generator (Philox4x32-10). A stream is identified by the
/// master seed plus an arbitrary tuple of 64-bit words; the block counter
/// advances within the stream. Identical (seed, words) always reproduces the
/// identical sequence, independent of any other stream, which is what makes
/// per-trajectory / per-cell substreams safe under arbitrary parallel
/// scheduling.
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::initializer_list<std::uint64_t> words) {
    std::uint64_t a = mix64(master_seed ^ 0x5bd1e995c6b3a1e7ULL);
    for (std::uint64_t w : words) a = mix64(a ^ mix64(w));
    const std::uint64_t b = mix64(a ^ 0x94d049bb133111ebULL);
    key_ = {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
    ctr_ = {0u, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
            static_cast<std::uint32_t>(mix64(b) >> 32)};
    bufpos_ = 4;
  }

  std::uint32_t next_u32() {
    if (bufpos_ == 4) refill();
    return buf_[bufpos_++];
  }
  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform on (0,1); never returns 0 (safe for logs).
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

  void fill_gaussian(Vec& out) {
    for (int i = 0; i < out.dim(); ++i) out[i] = gaussian();
  }

  /// Inverse-CDF Poisson sample, truncated at cap (cap < 0 disables the cap).
  int poisson(double mean, int cap = -1) {
    if (mean <= 0) return 0;
    const double u = uniform();
    double p = std::exp(-mean);
    double cum = p;
    int k = 0;
    while (u >= cum) {
      ++k;
      if (cap >= 0 && k >= cap) return cap;
      p *= mean / k;
      cum += p;
      if (p <= 0) break;  // underflow guard for extreme means
    }
    return k;
  }

  /// Uniform point in the open ball B_r(center).
  Vec uniform_in_ball(const Vec& center, double r) {
    const int d = center.dim();
    Vec dir(d);
    double n2 = 0;
    do {
      fill_gaussian(dir);
      n2 = dir.norm2();
    } while (n2 == 0);
    const double radius = r * std::pow(uniform_open(), 1.0 / d);
    return center + dir * (radius / std::sqrt(n2));
  }

 private:
  void refill() {
    std::array<std::uint32_t, 4> x = ctr_;
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * x[0];
      const std::uint64_t p1 = 0xCD9E8D57ULL * x[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    buf_ = x;
    bufpos_ = 0;
    ++ctr_[0];  // single 32-bit position counter: 4G blocks per stream
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int bufpos_ = 4;
  double cached_ = 0;
  bool have_cached_ = false;
};

inline Rng make_stream(std::uint64_t master_seed, StreamTag tag,
                       std::uint64_t a = 0, std::uint64_t b = 0,
                       std::uint64_t c = 0) {
  return Rng(master_seed, {static_cast<std::uint64_t>(tag), a, b, c});
}

}  // namespace rediff

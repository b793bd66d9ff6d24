#pragma once

// SplitMix64 and portable sampling helpers. std:: distributions are
// implementation-defined, so anything that must reproduce bit-for-bit
// across standard libraries goes through these.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace phdst {

struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent stream derived from this seed; used for per-day substreams.
  SplitMix64 fork(std::uint64_t stream) const {
    SplitMix64 r(state ^ (0x9e3779b97f4a7c15ull * (stream + 0x632be59bd9b4e019ull)));
    r.next();
    return r;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0,1)

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; second value discarded to stay stateless.
  double normal() {
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
  }
};

}  // namespace phdst

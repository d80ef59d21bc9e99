#pragma once

#include <cstdint>

namespace bnm {

// SplitMix64 mixer.  Deterministic across platforms, unlike the standard
// distributions, which is what matters here: seeds recorded in reports must
// replay bit-identically anywhere.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform in {0, ..., n-1}; n must be positive and desk-scale small.
    int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

  private:
    std::uint64_t state_;
};

// Stream for trial `index` under a run seed: serial and parallel execution
// visit identical per-trial streams.
inline Rng trial_rng(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix64(seed ^ (index * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull)));
}

}  // namespace bnm

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "svc/hash.hpp"

namespace svc {

// Deterministic RNG. mt19937_64 has a bit-exact sequence mandated by the
// standard; the float draws below avoid std::*_distribution, whose output
// is implementation-defined and would break cross-compiler reproducibility.
//
// Every random decision in the repo flows from one global seed through
// named substreams (`derive`), so independent components never consume
// from each other's streams.
class Rng {
 public:
  explicit Rng(uint64_t seed)
      : engine_(seed), derive_base_(seed ^ 0x9e3779b97f4a7c15ull) {}

  Rng derive(const std::string& name) const {
    return Rng(fnv1a64(name, derive_base_));
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int64_t randint(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(engine_() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller; consumes two uniforms per pair, caches the second.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  uint64_t derive_base_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace svc

#pragma once

#include <cmath>
#include <cstdint>

#include "textnav/common.hpp"

namespace textnav {

// Deterministic, platform-independent stream generator.  std:: distributions
// are implementation-defined, so sampling is done by hand on top of splitmix64.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Independent child stream; hashing the index through two rounds keeps
  // streams for adjacent indices uncorrelated.
  Rng stream(uint64_t index) const {
    uint64_t s = state_;
    s = mix(s + 0x9e3779b97f4a7c15ULL * (index + 1));
    s = mix(s ^ 0xbf58476d1ce4e5b9ULL);
    return Rng(s);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; caches the second deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * M_PI * u2;
    spare_ = mag * std::sin(ang);
    have_spare_ = true;
    return mag * std::cos(ang);
  }

  Vector3d normal3() {
    Vector3d v;
    v << normal(), normal(), normal();
    return v;
  }

  VectorXd normal_vec(int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace textnav

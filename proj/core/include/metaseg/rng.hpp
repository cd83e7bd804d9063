#pragma once

#include <cstdint>
#include <random>

#include "metaseg/tensor.hpp"

namespace metaseg {

// Seeded generator with a fixed bit-to-double mapping so streams are
// reproducible across standard libraries, not just across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 random mantissa bits.
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + unit() * (hi - lo); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  Tensor uniform_tensor(int n, int c, int h, int w, double lo, double hi) {
    Tensor t(n, c, h, w);
    for (double& v : t.data) v = uniform(lo, hi);
    return t;
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace metaseg

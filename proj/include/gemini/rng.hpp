#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Seeded random draws with the transforms spelled out, so streams are
// identical across standard libraries (std::uniform_real_distribution and
// std::normal_distribution are implementation-defined).
namespace gemini {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Chi-squared with df degrees of freedom, as a sum of squared normals.
  double chi_squared(int df) {
    double s = 0.0;
    for (int i = 0; i < df; ++i) {
      double z = normal();
      s += z * z;
    }
    return s;
  }

  std::uint64_t raw() { return gen_(); }

  // Uniform integer in [0, n) by rejection, free of modulo bias.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return r % n;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gemini

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bproj {

/// Deterministic random helpers on top of std::mt19937_64.
///
/// The standard distribution objects are implementation-defined, so every
/// draw here is spelled out explicitly; a fixed seed yields the same stream
/// on any conforming standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n > 0, by rejection sampling.
  uint64_t below(uint64_t n) {
    const uint64_t limit = ~uint64_t{0} - ~uint64_t{0} % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // 1 - uniform() is in (0, 1], which keeps the log finite.
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * uniform();
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bproj

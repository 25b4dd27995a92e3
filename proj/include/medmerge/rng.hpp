#pragma once

#include <cstdint>
#include <random>

namespace mm {

/// Deterministic RNG wrapper. mt19937_64 output is fully specified by the
/// standard, so sequences are identical across platforms. Floating-point
/// draws are derived from raw 64-bit words directly instead of going through
/// std::uniform_real_distribution, whose mapping is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1), 53 bits of entropy.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). Modulo bias is negligible for n << 2^64.
  uint64_t below(uint64_t n) { return eng_() % n; }

  /// Approximate standard normal via Irwin-Hall (sum of 12 uniforms).
  /// Chosen over Box-Muller so generation never calls platform-dependent
  /// transcendentals; close enough to Gaussian for init and noise.
  double normal_ih() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

  /// Fisher-Yates shuffle of an index vector.
  template <class Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

/// Round to a 1/256 grid. Generated datasets quantize every pixel so that
/// byte-level file hashes are stable across platforms.
inline double grid256(double v) {
  return static_cast<double>(static_cast<long long>(v * 256.0 + (v >= 0 ? 0.5 : -0.5))) / 256.0;
}

}  // namespace mm

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace arrowbf {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfSound = 343.0;  // m/s

inline double db_to_power(double db) { return std::pow(10.0, db / 10.0); }
inline double power_to_db(double power) { return 10.0 * std::log10(power); }

// Deterministic random source. mt19937_64 output is pinned by the standard;
// the real-valued mappings live here because std::uniform_real_distribution
// and std::normal_distribution are implementation-defined and would break
// reproducibility of seeded runs across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); rejection sampling, no modulo bias.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Derives an independent stream seed from a master seed (splitmix64 mix).
uint64_t derive_seed(uint64_t master, uint64_t stream);

// Per-frame speech presence mask I(l).
struct VadMask {
  std::vector<uint8_t> active;

  int frames() const { return static_cast<int>(active.size()); }
  int present_count() const;
  int absent_count() const { return frames() - present_count(); }
};

}  // namespace arrowbf

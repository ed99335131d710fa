#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace msim {

// Counter-based deterministic random stream. A stream is keyed by an
// arbitrary sequence of integers / strings folded into a 64-bit state;
// draws are pure functions of (key, counter), so independent streams can
// be opened anywhere without sequence coupling between subsystems.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(uint64_t seed) : state_(mix64(seed ^ kGolden)) {}

  CounterRng& key(uint64_t k) {
    state_ = mix64(state_ ^ mix64(k + kGolden));
    return *this;
  }
  CounterRng& key(std::string_view s) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return key(h);
  }

  uint64_t next_u64() { return mix64(state_ + (++counter_) * kGolden); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; one value per call, no caching so the
  // draw count stays an explicit function of call count
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // integer in [lo, hi] inclusive
  int64_t range(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  static uint64_t mix64(uint64_t z) {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;
  uint64_t state_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace msim

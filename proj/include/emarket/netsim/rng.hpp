#pragma once

#include <cstdint>

namespace emarket::netsim {

// xorshift64* (Vigna 2016). Update:
//   x ^= x >> 12; x ^= x << 25; x ^= x >> 27; out = x * 0x2545F4914F6CDD1D
// The seed is scrambled once with splitmix64 so that seed 0 is usable.
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
  }

  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
  }

  // True with probability num/den exactly (up to 2^-64 granularity).
  bool bernoulli(std::uint64_t num, std::uint64_t den) {
    auto draw = next();
    if (num >= den) return true;
    if (num == 0) return false;
    return static_cast<unsigned __int128>(draw) * den <
           static_cast<unsigned __int128>(num) << 64;
  }

  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace emarket::netsim

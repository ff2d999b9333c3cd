#pragma once

#include <cstdint>
#include <stdexcept>

namespace emarket {

// num / den rounded half-up, for non-negative num and positive den.
// 128-bit intermediate so products of two int64 quantities cannot overflow.
inline std::int64_t div_round_half_up(__int128 num, __int128 den) {
  if (num < 0 || den <= 0) throw std::domain_error("div_round_half_up expects num >= 0, den > 0");
  __int128 q = num / den + (2 * (num % den) >= den ? 1 : 0);
  if (q > INT64_MAX) throw std::overflow_error("rounded quotient exceeds int64");
  return static_cast<std::int64_t>(q);
}

}  // namespace emarket

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "emarket/common/bytes.hpp"

namespace emarket::kernels {

// Header bytes with the nonce spliced in as a decimal integer:
//   prefix + to_string(nonce) + suffix
struct PowTemplate {
  std::string prefix;
  std::string suffix;
  unsigned difficulty_bits = 0;
};

struct PowHit {
  std::uint64_t nonce = 0;
  Hash256 hash;
  std::uint64_t attempts = 0;
};

// hash < 2^256 >> bits, reading the hash as a big-endian integer.
bool meets_target(const Hash256& hash, unsigned difficulty_bits);

Hash256 pow_hash(const PowTemplate& tpl, std::uint64_t nonce);

// Sequential scan start, start+1, ... (wrapping). max_attempts == 0 means the
// whole 64-bit nonce space. Returns nullopt when the budget is exhausted.
std::optional<PowHit> pow_search_serial(const PowTemplate& tpl, std::uint64_t start_nonce,
                                        std::uint64_t max_attempts = 0);

// Same result as pow_search_serial: chunks are scanned in parallel and the
// hit with the lowest offset from start_nonce wins.
std::optional<PowHit> pow_search_parallel(const PowTemplate& tpl, std::uint64_t start_nonce,
                                          std::uint64_t max_attempts = 0,
                                          std::uint64_t chunk = 1024);

int max_threads();

}  // namespace emarket::kernels

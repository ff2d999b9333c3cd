#include "emarket/kernels/pow.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "emarket/common/crypto.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace emarket::kernels {

bool meets_target(const Hash256& hash, unsigned difficulty_bits) {
  unsigned full = difficulty_bits / 8;
  unsigned rem = difficulty_bits % 8;
  for (unsigned i = 0; i < full; ++i)
    if (hash.data[i] != 0) return false;
  if (rem == 0) return true;
  return (hash.data[full] >> (8 - rem)) == 0;
}

namespace {

struct Scratch {
  std::string buf;
  std::size_t nonce_at = 0;

  explicit Scratch(const PowTemplate& tpl) {
    buf.reserve(tpl.prefix.size() + tpl.suffix.size() + 20);
    buf = tpl.prefix;
    nonce_at = buf.size();
  }

  Hash256 hash(const PowTemplate& tpl, std::uint64_t nonce) {
    char digits[24];
    auto res = std::to_chars(digits, digits + sizeof(digits), nonce);
    buf.resize(nonce_at);
    buf.append(digits, res.ptr);
    buf.append(tpl.suffix);
    return crypto::sha256(buf);
  }
};

// 2^64 when max_attempts == 0
unsigned __int128 budget(std::uint64_t max_attempts) {
  if (max_attempts == 0) return static_cast<unsigned __int128>(1) << 64;
  return max_attempts;
}

}  // namespace

Hash256 pow_hash(const PowTemplate& tpl, std::uint64_t nonce) {
  Scratch s(tpl);
  return s.hash(tpl, nonce);
}

std::optional<PowHit> pow_search_serial(const PowTemplate& tpl, std::uint64_t start_nonce,
                                        std::uint64_t max_attempts) {
  Scratch s(tpl);
  const auto limit = budget(max_attempts);
  std::uint64_t nonce = start_nonce;
  for (unsigned __int128 tried = 0; tried < limit; ++tried, ++nonce) {
    auto h = s.hash(tpl, nonce);
    if (meets_target(h, tpl.difficulty_bits))
      return PowHit{nonce, h, static_cast<std::uint64_t>(tried + 1)};
  }
  return std::nullopt;
}

std::optional<PowHit> pow_search_parallel(const PowTemplate& tpl, std::uint64_t start_nonce,
                                          std::uint64_t max_attempts, std::uint64_t chunk) {
  chunk = std::max<std::uint64_t>(chunk, 1);
  const auto limit = budget(max_attempts);
  const int threads = max_threads();
  const unsigned __int128 round_span = static_cast<unsigned __int128>(chunk) * threads;

  for (unsigned __int128 base = 0; base < limit; base += round_span) {
    constexpr std::uint64_t none = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t best_offset = none;  // offset relative to base
    Hash256 best_hash;

#pragma omp parallel for schedule(static, 1)
    for (int c = 0; c < threads; ++c) {
      Scratch s(tpl);
      const unsigned __int128 lo = base + static_cast<unsigned __int128>(c) * chunk;
      for (std::uint64_t i = 0; i < chunk; ++i) {
        const unsigned __int128 offset = lo + i;
        if (offset >= limit) break;
        const auto nonce = static_cast<std::uint64_t>(start_nonce + offset);
        auto h = s.hash(tpl, nonce);
        if (meets_target(h, tpl.difficulty_bits)) {
          const auto rel = static_cast<std::uint64_t>(offset - base);
#pragma omp critical(pow_best)
          {
            if (rel < best_offset) {
              best_offset = rel;
              best_hash = h;
            }
          }
          break;
        }
      }
    }

    if (best_offset != none) {
      const unsigned __int128 offset = base + best_offset;
      return PowHit{static_cast<std::uint64_t>(start_nonce + offset), best_hash,
                    static_cast<std::uint64_t>(offset + 1)};
    }
  }
  return std::nullopt;
}

int max_threads() {
#ifdef _OPENMP
  return std::max(1, omp_get_max_threads());
#else
  return 1;
#endif
}

}  // namespace emarket::kernels

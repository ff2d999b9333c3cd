#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emarket {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Fixed-width byte string. The tag keeps hashes, keys and signatures apart.
template <std::size_t N, class Tag>
struct FixedBytes {
  static constexpr std::size_t size = N;
  std::array<std::uint8_t, N> data{};

  auto operator<=>(const FixedBytes&) const = default;
  bool operator==(const FixedBytes&) const = default;

  std::span<const std::uint8_t, N> span() const { return data; }
  std::string hex() const { return to_hex(data); }
  bool is_zero() const {
    for (auto b : data)
      if (b != 0) return false;
    return true;
  }

  static FixedBytes from_hex(std::string_view hex) {
    auto raw = emarket::from_hex(hex);
    if (raw.size() != N)
      throw std::invalid_argument("expected " + std::to_string(N) + " bytes of hex, got " +
                                  std::to_string(raw.size()));
    FixedBytes out;
    std::copy(raw.begin(), raw.end(), out.data.begin());
    return out;
  }
};

struct HashTag {};
struct PublicKeyTag {};
struct SignatureTag {};
struct DeviceIdTag {};

using Hash256 = FixedBytes<32, HashTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;
using DeviceId = FixedBytes<16, DeviceIdTag>;

using AccountId = std::string;

}  // namespace emarket

#pragma once

#include <array>
#include <span>
#include <string_view>

#include "emarket/common/bytes.hpp"

namespace emarket::crypto {

Hash256 sha256(std::span<const std::uint8_t> data);
inline Hash256 sha256(std::string_view s) { return sha256(as_bytes(s)); }

// Domain-separated derivation used for every deterministic seed in the system.
Hash256 derive(std::string_view domain, std::string_view material);

bool verify(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& sig);

// Ed25519 key pair held in memory. Signing is deterministic.
class SigningKey {
 public:
  static SigningKey from_seed(const Hash256& seed);
  static SigningKey generate();

  Signature sign(std::span<const std::uint8_t> message) const;
  Signature sign(const Hash256& digest) const { return sign(digest.span()); }
  const PublicKey& public_key() const { return public_key_; }
  const Hash256& seed() const { return seed_; }

 private:
  SigningKey() = default;
  Hash256 seed_;
  PublicKey public_key_;
  std::array<std::uint8_t, 64> secret_{};
};

}  // namespace emarket::crypto

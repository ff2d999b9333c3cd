#include "emarket/common/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace emarket {

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

namespace crypto {

namespace {
void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}
}  // namespace

Hash256 sha256(std::span<const std::uint8_t> data) {
  ensure_sodium();
  Hash256 out;
  crypto_hash_sha256(out.data.data(), data.data(), data.size());
  return out;
}

Hash256 derive(std::string_view domain, std::string_view material) {
  std::string buf;
  buf.reserve(domain.size() + material.size() + 1);
  buf.append(domain);
  buf.push_back('\0');
  buf.append(material);
  return sha256(buf);
}

bool verify(const PublicKey& key, std::span<const std::uint8_t> message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data.data(), message.data(), message.size(),
                                     key.data.data()) == 0;
}

SigningKey SigningKey::from_seed(const Hash256& seed) {
  ensure_sodium();
  SigningKey k;
  k.seed_ = seed;
  crypto_sign_seed_keypair(k.public_key_.data.data(), k.secret_.data(), seed.data.data());
  return k;
}

SigningKey SigningKey::generate() {
  ensure_sodium();
  Hash256 seed;
  randombytes_buf(seed.data.data(), seed.data.size());
  return from_seed(seed);
}

Signature SigningKey::sign(std::span<const std::uint8_t> message) const {
  Signature sig;
  crypto_sign_detached(sig.data.data(), nullptr, message.data(), message.size(), secret_.data());
  return sig;
}

}  // namespace crypto
}  // namespace emarket

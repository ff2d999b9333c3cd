#pragma once

#include <map>
#include <optional>
#include <shared_mutex>

#include "emarket/common/bytes.hpp"
#include "emarket/common/crypto.hpp"

namespace emarket::ledger {

// Account id -> registered public key. Internally synchronised so the
// gateway can register users while ledger nodes validate.
class KeyDirectory {
 public:
  KeyDirectory() = default;
  KeyDirectory(const KeyDirectory& other);
  KeyDirectory& operator=(const KeyDirectory&) = delete;

  // Re-registering the same key is a no-op; a different key for an existing
  // account throws std::invalid_argument.
  void register_key(const AccountId& account, const PublicKey& key);
  std::optional<PublicKey> find(const AccountId& account) const;
  bool contains(const AccountId& account) const { return find(account).has_value(); }
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<AccountId, PublicKey> keys_;
};

// Custodial signing keys held by the operator (dev mode / simulation).
class KeyRing {
 public:
  const crypto::SigningKey& add(const AccountId& account, crypto::SigningKey key);
  // Deterministic key for account derived from a seed string.
  const crypto::SigningKey& derive(const AccountId& account, std::string_view seed);
  const crypto::SigningKey* find(const AccountId& account) const;
  const crypto::SigningKey& at(const AccountId& account) const;

 private:
  std::map<AccountId, crypto::SigningKey> keys_;
};

crypto::SigningKey derive_account_key(const AccountId& account, std::string_view seed);

}  // namespace emarket::ledger

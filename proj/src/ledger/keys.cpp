#include "emarket/ledger/keys.hpp"

#include <mutex>
#include <stdexcept>

#include "emarket/ledger/errors.hpp"

namespace emarket::ledger {

const char* to_string(LedgerErrc code) {
  switch (code) {
    case LedgerErrc::InvalidTransaction: return "InvalidTransaction";
    case LedgerErrc::NonceExhausted: return "NonceExhausted";
    case LedgerErrc::InvalidPow: return "InvalidPow";
    case LedgerErrc::UnknownParent: return "UnknownParent";
    case LedgerErrc::InvalidTx: return "InvalidTx";
    case LedgerErrc::BadHeight: return "BadHeight";
    case LedgerErrc::BadTxRoot: return "BadTxRoot";
    case LedgerErrc::BadDifficulty: return "BadDifficulty";
    case LedgerErrc::GenesisMismatch: return "GenesisMismatch";
    case LedgerErrc::NotFound: return "NotFound";
    case LedgerErrc::LedgerUnavailable: return "LedgerUnavailable";
    case LedgerErrc::UnknownAccount: return "UnknownAccount";
    case LedgerErrc::Corrupt: return "Corrupt";
  }
  return "Unknown";
}

KeyDirectory::KeyDirectory(const KeyDirectory& other) {
  std::shared_lock lock(other.mu_);
  keys_ = other.keys_;
}

void KeyDirectory::register_key(const AccountId& account, const PublicKey& key) {
  std::unique_lock lock(mu_);
  auto [it, inserted] = keys_.emplace(account, key);
  if (!inserted && it->second != key)
    throw std::invalid_argument("account '" + account + "' already has a different key");
}

std::optional<PublicKey> KeyDirectory::find(const AccountId& account) const {
  std::shared_lock lock(mu_);
  auto it = keys_.find(account);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

std::size_t KeyDirectory::size() const {
  std::shared_lock lock(mu_);
  return keys_.size();
}

crypto::SigningKey derive_account_key(const AccountId& account, std::string_view seed) {
  std::string material(seed);
  material.push_back('/');
  material.append(account);
  return crypto::SigningKey::from_seed(crypto::derive("emarket/account-key", material));
}

const crypto::SigningKey& KeyRing::add(const AccountId& account, crypto::SigningKey key) {
  auto [it, inserted] = keys_.insert_or_assign(account, std::move(key));
  return it->second;
}

const crypto::SigningKey& KeyRing::derive(const AccountId& account, std::string_view seed) {
  if (auto* k = find(account)) return *k;
  return add(account, derive_account_key(account, seed));
}

const crypto::SigningKey* KeyRing::find(const AccountId& account) const {
  auto it = keys_.find(account);
  return it == keys_.end() ? nullptr : &it->second;
}

const crypto::SigningKey& KeyRing::at(const AccountId& account) const {
  if (auto* k = find(account)) return *k;
  throw LedgerError(LedgerErrc::UnknownAccount, "no signing key held for account '" + account + "'");
}

}  // namespace emarket::ledger

#include "emarket/ledger/transaction.hpp"

#include <array>
#include <utility>

#include "emarket/ledger/errors.hpp"

namespace emarket::ledger {

namespace {
constexpr std::array<std::pair<TxKind, const char*>, 5> kKindNames{{
    {TxKind::Payment, "Payment"},
    {TxKind::TokenIssue, "TokenIssue"},
    {TxKind::AgreementRecord, "AgreementRecord"},
    {TxKind::MeterCommit, "MeterCommit"},
    {TxKind::RatingRecord, "RatingRecord"},
}};
}  // namespace

const char* to_string(TxKind kind) {
  for (auto [k, name] : kKindNames)
    if (k == kind) return name;
  return "Unknown";
}

std::optional<TxKind> parse_tx_kind(std::string_view name) {
  for (auto [k, n] : kKindNames)
    if (name == n) return k;
  return std::nullopt;
}

const char* to_string(TxCheck check) {
  switch (check) {
    case TxCheck::Ok: return "Ok";
    case TxCheck::IdMismatch: return "IdMismatch";
    case TxCheck::UnknownAuthor: return "UnknownAuthor";
    case TxCheck::BadSignature: return "BadSignature";
    case TxCheck::NonCanonicalPayload: return "NonCanonicalPayload";
  }
  return "Unknown";
}

Hash256 compute_tx_id(TxKind kind, const Json& payload, const AccountId& author,
                      std::int64_t timestamp) {
  Json body = {
      {"author", author},
      {"kind", to_string(kind)},
      {"payload", payload},
      {"timestamp", timestamp},
  };
  return canonical_hash(body);
}

Transaction make_transaction(TxKind kind, Json payload, const AccountId& author,
                             std::int64_t timestamp, const crypto::SigningKey& key) {
  Transaction tx;
  tx.kind = kind;
  tx.payload = std::move(payload);
  tx.author = author;
  tx.timestamp = timestamp;
  tx.tx_id = compute_tx_id(tx.kind, tx.payload, tx.author, tx.timestamp);
  tx.signature = key.sign(tx.tx_id);
  return tx;
}

TxCheck check_transaction(const Transaction& tx, const KeyDirectory& keys) {
  Hash256 expected;
  try {
    expected = compute_tx_id(tx.kind, tx.payload, tx.author, tx.timestamp);
  } catch (const CanonicalError&) {
    return TxCheck::NonCanonicalPayload;
  }
  if (expected != tx.tx_id) return TxCheck::IdMismatch;
  auto key = keys.find(tx.author);
  if (!key) return TxCheck::UnknownAuthor;
  if (!crypto::verify(*key, tx.tx_id.span(), tx.signature)) return TxCheck::BadSignature;
  return TxCheck::Ok;
}

Json Transaction::to_json() const {
  return Json{
      {"author", author},
      {"kind", to_string(kind)},
      {"payload", payload},
      {"signature", signature.hex()},
      {"timestamp", timestamp},
      {"tx_id", tx_id.hex()},
  };
}

Transaction Transaction::from_json(const Json& j) {
  Transaction tx;
  auto kind_name = require_string(j, "kind");
  auto kind = parse_tx_kind(kind_name);
  if (!kind) throw LedgerError(LedgerErrc::Corrupt, "unknown transaction kind '" + kind_name + "'");
  tx.kind = *kind;
  tx.payload = require_field(j, "payload");
  tx.author = require_string(j, "author");
  tx.timestamp = require_int(j, "timestamp");
  tx.signature = Signature::from_hex(require_string(j, "signature"));
  tx.tx_id = Hash256::from_hex(require_string(j, "tx_id"));
  return tx;
}

}  // namespace emarket::ledger

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "emarket/common/canonical_json.hpp"
#include "emarket/common/crypto.hpp"
#include "emarket/ledger/keys.hpp"

namespace emarket::ledger {

enum class TxKind { Payment, TokenIssue, AgreementRecord, MeterCommit, RatingRecord };

const char* to_string(TxKind kind);
std::optional<TxKind> parse_tx_kind(std::string_view name);

struct Transaction {
  Hash256 tx_id;
  TxKind kind = TxKind::Payment;
  Json payload = Json::object();
  AccountId author;
  Signature signature;
  std::int64_t timestamp = 0;

  Json to_json() const;
  static Transaction from_json(const Json& j);

  bool operator==(const Transaction&) const = default;
};

// sha256 over canonical {author, kind, payload, timestamp}
Hash256 compute_tx_id(TxKind kind, const Json& payload, const AccountId& author,
                      std::int64_t timestamp);

Transaction make_transaction(TxKind kind, Json payload, const AccountId& author,
                             std::int64_t timestamp, const crypto::SigningKey& key);

enum class TxCheck { Ok, IdMismatch, UnknownAuthor, BadSignature, NonCanonicalPayload };
const char* to_string(TxCheck check);

TxCheck check_transaction(const Transaction& tx, const KeyDirectory& keys);

}  // namespace emarket::ledger

#include "emarket/ledger/block.hpp"

#include "emarket/ledger/errors.hpp"

namespace emarket::ledger {

Json Block::header_json() const {
  return Json{
      {"difficulty_bits", difficulty_bits},
      {"height", height},
      {"nonce", nonce},
      {"parent_hash", parent_hash.hex()},
      {"timestamp", timestamp},
      {"tx_root", tx_root.hex()},
  };
}

Hash256 Block::hash() const { return canonical_hash(header_json()); }

Json Block::to_json() const {
  Json j = header_json();
  Json list = Json::array();
  for (const auto& tx : txs) list.push_back(tx.to_json());
  j["txs"] = std::move(list);
  return j;
}

Block Block::from_json(const Json& j) {
  Block b;
  auto height = require_int(j, "height");
  auto bits = require_int(j, "difficulty_bits");
  if (height < 0) throw LedgerError(LedgerErrc::Corrupt, "negative block height");
  if (bits < 0 || bits > 255) throw LedgerError(LedgerErrc::Corrupt, "difficulty_bits out of range");
  b.height = static_cast<std::uint64_t>(height);
  b.difficulty_bits = static_cast<unsigned>(bits);
  const auto& nonce = require_field(j, "nonce");
  if (!nonce.is_number_unsigned() && !(nonce.is_number_integer() && nonce.get<std::int64_t>() >= 0))
    throw LedgerError(LedgerErrc::Corrupt, "nonce must be an unsigned integer");
  b.nonce = nonce.get<std::uint64_t>();
  b.parent_hash = Hash256::from_hex(require_string(j, "parent_hash"));
  b.tx_root = Hash256::from_hex(require_string(j, "tx_root"));
  b.timestamp = require_int(j, "timestamp");
  const auto& txs = require_field(j, "txs");
  if (!txs.is_array()) throw LedgerError(LedgerErrc::Corrupt, "txs must be an array");
  for (const auto& t : txs) b.txs.push_back(Transaction::from_json(t));
  return b;
}

Hash256 compute_tx_root(std::span<const Transaction> txs) {
  Bytes buf;
  buf.reserve(txs.size() * 32);
  for (const auto& tx : txs) buf.insert(buf.end(), tx.tx_id.data.begin(), tx.tx_id.data.end());
  return crypto::sha256(buf);
}

kernels::PowTemplate pow_template(const Block& header) {
  static constexpr std::string_view marker = "\"__NONCE__\"";
  Json j = header.header_json();
  j["nonce"] = "__NONCE__";
  auto text = canonical_dump(j);
  auto at = text.find(marker);
  kernels::PowTemplate tpl;
  tpl.prefix = text.substr(0, at);
  tpl.suffix = text.substr(at + marker.size());
  tpl.difficulty_bits = header.difficulty_bits;
  return tpl;
}

const char* to_string(BlockCheck check) {
  switch (check) {
    case BlockCheck::Ok: return "Ok";
    case BlockCheck::BadDifficulty: return "BadDifficulty";
    case BlockCheck::InvalidPow: return "InvalidPow";
    case BlockCheck::BadTxRoot: return "BadTxRoot";
    case BlockCheck::InvalidTx: return "InvalidTx";
    case BlockCheck::BadGenesis: return "BadGenesis";
  }
  return "Unknown";
}

BlockCheckResult check_block(const Block& block, const KeyDirectory& keys) {
  BlockCheckResult r;
  if (block.difficulty_bits > kMaxDifficultyBits) {
    r.check = BlockCheck::BadDifficulty;
    return r;
  }
  if ((block.height == 0) != block.parent_hash.is_zero()) {
    r.check = BlockCheck::BadGenesis;
    return r;
  }
  if (!kernels::meets_target(block.hash(), block.difficulty_bits)) {
    r.check = BlockCheck::InvalidPow;
    return r;
  }
  if (compute_tx_root(block.txs) != block.tx_root) {
    r.check = BlockCheck::BadTxRoot;
    return r;
  }
  for (std::size_t i = 0; i < block.txs.size(); ++i) {
    auto c = check_transaction(block.txs[i], keys);
    if (c != TxCheck::Ok) {
      r.check = BlockCheck::InvalidTx;
      r.tx_index = i;
      r.tx_check = c;
      return r;
    }
  }
  return r;
}

Block mine_block(std::span<const Transaction> pending, const std::optional<ParentRef>& parent,
                 unsigned difficulty_bits, std::uint64_t start_nonce, const KeyDirectory& keys,
                 const MineOptions& options) {
  if (difficulty_bits > kMaxDifficultyBits)
    throw LedgerError(LedgerErrc::BadDifficulty,
                      "difficulty_bits " + std::to_string(difficulty_bits) + " exceeds 32");
  for (std::size_t i = 0; i < pending.size(); ++i) {
    auto c = check_transaction(pending[i], keys);
    if (c != TxCheck::Ok)
      throw LedgerError(LedgerErrc::InvalidTransaction,
                        "pending transaction " + std::to_string(i) + " rejected: " + to_string(c));
  }

  Block b;
  if (parent) {
    b.height = parent->height + 1;
    b.parent_hash = parent->hash;
    b.timestamp = options.timestamp.value_or(parent->timestamp + 1);
  } else {
    b.timestamp = options.timestamp.value_or(0);
  }
  b.difficulty_bits = difficulty_bits;
  b.txs.assign(pending.begin(), pending.end());
  b.tx_root = compute_tx_root(b.txs);

  auto tpl = pow_template(b);
  auto hit = options.parallel ? kernels::pow_search_parallel(tpl, start_nonce, options.max_attempts)
                              : kernels::pow_search_serial(tpl, start_nonce, options.max_attempts);
  if (!hit) throw LedgerError(LedgerErrc::NonceExhausted, "no nonce met the target");
  b.nonce = hit->nonce;
  return b;
}

Block make_genesis(std::int64_t timestamp) {
  Block g;
  g.timestamp = timestamp;
  g.tx_root = compute_tx_root({});
  return g;
}

}  // namespace emarket::ledger

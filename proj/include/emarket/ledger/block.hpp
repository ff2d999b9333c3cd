#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "emarket/common/canonical_json.hpp"
#include "emarket/kernels/pow.hpp"
#include "emarket/ledger/transaction.hpp"

namespace emarket::ledger {

inline constexpr unsigned kMaxDifficultyBits = 32;

struct Block {
  std::uint64_t height = 0;
  Hash256 parent_hash;  // all-zero for genesis
  Hash256 tx_root;
  std::uint64_t nonce = 0;
  unsigned difficulty_bits = 0;
  std::int64_t timestamp = 0;
  std::vector<Transaction> txs;

  Json header_json() const;
  Hash256 hash() const;
  bool is_genesis() const { return height == 0 && parent_hash.is_zero(); }

  Json to_json() const;
  static Block from_json(const Json& j);

  bool operator==(const Block&) const = default;
};

// sha256 over the concatenated raw tx ids, in block order.
Hash256 compute_tx_root(std::span<const Transaction> txs);

// Header bytes split around the nonce, for the search kernels.
kernels::PowTemplate pow_template(const Block& header);

enum class BlockCheck { Ok, BadDifficulty, InvalidPow, BadTxRoot, InvalidTx, BadGenesis };
const char* to_string(BlockCheck check);

struct BlockCheckResult {
  BlockCheck check = BlockCheck::Ok;
  std::optional<std::size_t> tx_index;
  TxCheck tx_check = TxCheck::Ok;

  bool ok() const { return check == BlockCheck::Ok; }
};

// Context-free checks: difficulty range, PoW target, tx_root, every tx.
BlockCheckResult check_block(const Block& block, const KeyDirectory& keys);

struct ParentRef {
  Hash256 hash;
  std::uint64_t height = 0;
  std::int64_t timestamp = 0;

  static ParentRef of(const Block& b) { return {b.hash(), b.height, b.timestamp}; }
};

struct MineOptions {
  std::optional<std::int64_t> timestamp;  // default: parent timestamp + 1, genesis 0
  std::uint64_t max_attempts = 0;         // 0 = whole nonce space
  bool parallel = true;
};

// Seals pending into a block on parent (nullopt = genesis sentinel). Throws
// LedgerError{InvalidTransaction} if any pending tx fails check_transaction and
// LedgerError{NonceExhausted} when the nonce budget runs out.
Block mine_block(std::span<const Transaction> pending, const std::optional<ParentRef>& parent,
                 unsigned difficulty_bits, std::uint64_t start_nonce, const KeyDirectory& keys,
                 const MineOptions& options = {});

Block make_genesis(std::int64_t timestamp = 0);

}  // namespace emarket::ledger

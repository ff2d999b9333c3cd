#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emarket/ledger/block.hpp"
#include "emarket/ledger/errors.hpp"

namespace emarket::ledger {

inline constexpr std::size_t kDefaultStagingCapacity = 1024;

// Block tree rooted at a single genesis block. Blocks whose parent is unknown
// wait in a bounded staging buffer and are connected when the parent arrives.
class ChainStore {
 public:
  struct Entry {
    Block block;
    std::uint64_t arrival_index = 0;
  };

  enum class AppendStatus { Added, Duplicate, Staged };

  struct AppendResult {
    AppendStatus status = AppendStatus::Added;
    std::vector<Hash256> connected;  // this block plus any flushed descendants
    std::vector<Hash256> dropped;    // staged descendants that failed contextual checks
  };

  explicit ChainStore(std::shared_ptr<const KeyDirectory> keys,
                      std::size_t staging_capacity = kDefaultStagingCapacity);

  // Throws LedgerError{InvalidPow | InvalidTx | BadTxRoot | BadDifficulty |
  // BadHeight | GenesisMismatch}. Unknown parents are staged, not thrown.
  AppendResult append_block(const Block& block);

  const Block* find(const Hash256& hash) const;
  const Entry* entry(const Hash256& hash) const;
  bool contains(const Hash256& hash) const { return blocks_.count(hash) != 0; }

  bool empty() const { return blocks_.empty(); }
  std::size_t size() const { return blocks_.size(); }
  std::size_t staged_count() const { return staged_order_.size(); }
  bool is_staged(const Hash256& hash) const;

  std::optional<Hash256> canonical_head() const { return head_; }
  const Block& head_block() const;
  std::optional<Hash256> genesis() const { return genesis_; }

  // genesis .. tip inclusive
  std::vector<Hash256> path_to(const Hash256& tip) const;
  std::vector<Block> chain_to(const Hash256& tip) const;

  const std::map<Hash256, Entry>& entries() const { return blocks_; }
  const KeyDirectory& keys() const { return *keys_; }
  std::shared_ptr<const KeyDirectory> key_directory() const { return keys_; }

 private:
  void connect(const Block& block, const Hash256& hash, AppendResult& result);
  void stage(const Block& block, const Hash256& hash);
  void flush_staged(const Hash256& parent, AppendResult& result);

  std::shared_ptr<const KeyDirectory> keys_;
  std::size_t staging_capacity_;
  std::map<Hash256, Entry> blocks_;
  std::uint64_t next_arrival_ = 0;
  std::optional<Hash256> head_;
  std::optional<Hash256> genesis_;

  std::map<Hash256, std::vector<std::pair<Hash256, Block>>> staged_by_parent_;
  std::deque<std::pair<Hash256, Hash256>> staged_order_;  // (hash, parent), oldest first
};

// Tip with maximum height; ties go to the smallest arrival index.
// Throws LedgerError{NotFound} on an empty store.
Hash256 fork_choice(const ChainStore& store);

struct VerifyReport {
  bool ok = true;
  std::optional<std::uint64_t> failed_height;
  std::string reason;

  explicit operator bool() const { return ok; }
};

// Every block genesis..tip satisfies all invariants, heights consecutive and
// parent links match the recomputed hash of the predecessor.
VerifyReport verify_chain(std::span<const Block> chain, const KeyDirectory& keys);
VerifyReport verify_chain(const ChainStore& store, const Hash256& tip);

}  // namespace emarket::ledger

#include "emarket/ledger/local_ledger.hpp"

#include <algorithm>

#include "emarket/common/jsonl.hpp"

namespace emarket::ledger {

LocalLedger::LocalLedger(ChainStore& store, const KeyRing& keyring, LocalLedgerConfig config,
                         Publisher publish)
    : store_(store), keyring_(keyring), config_(config), publish_(std::move(publish)) {
  if (!publish_) publish_ = [this](const Block& b) { store_.append_block(b); };
}

Hash256 LocalLedger::submit(TxKind kind, Json payload, const AccountId& author) {
  if (!available_) throw LedgerError(LedgerErrc::LedgerUnavailable, "ledger is not accepting transactions");
  auto tx = make_transaction(kind, std::move(payload), author, now_, keyring_.at(author));
  auto id = tx.tx_id;
  bool dup = std::any_of(mempool_.begin(), mempool_.end(),
                         [&](const Transaction& t) { return t.tx_id == id; });
  if (!dup && !is_confirmed(id)) mempool_.push_back(std::move(tx));
  return id;
}

std::optional<Block> LocalLedger::mine(bool force) {
  if (!mining_enabled_) return std::nullopt;
  refresh_index();
  const auto& head = store_.head_block();
  // Confirmed transactions stay around until buried deep enough that a reorg
  // cannot orphan them; orphaned ones are simply mined again.
  mempool_.erase(std::remove_if(mempool_.begin(), mempool_.end(),
                                [&](const Transaction& t) {
                                  auto it = confirmed_.find(t.tx_id);
                                  return it != confirmed_.end() && head.height - it->second >= kBurialDepth;
                                }),
                 mempool_.end());
  std::vector<Transaction> batch;
  for (const auto& t : mempool_)
    if (confirmed_.count(t.tx_id) == 0) batch.push_back(t);
  if (batch.empty() && !force) return std::nullopt;

  MineOptions opts;
  opts.timestamp = std::max(now_, head.timestamp + 1);
  opts.parallel = config_.parallel_mining;
  auto block = mine_block(batch, ParentRef::of(head), config_.difficulty_bits, config_.start_nonce,
                          store_.keys(), opts);
  publish_(block);
  return block;
}

void LocalLedger::refresh_index() const {
  auto head = store_.canonical_head();
  if (!head) {
    confirmed_.clear();
    indexed_head_.reset();
    return;
  }
  if (indexed_head_ == head) return;

  // Walk back from the new head; if we meet the indexed head the chain was
  // only extended and the existing index stays valid.
  std::vector<const Block*> added;
  bool extended = false;
  Hash256 cur = *head;
  while (true) {
    if (indexed_head_ && cur == *indexed_head_) {
      extended = true;
      break;
    }
    const Block* b = store_.find(cur);
    added.push_back(b);
    if (b->is_genesis()) break;
    cur = b->parent_hash;
  }
  if (!extended) confirmed_.clear();
  for (const Block* b : added)
    for (const auto& tx : b->txs) confirmed_.emplace(tx.tx_id, b->height);
  indexed_head_ = head;
}

bool LocalLedger::is_confirmed(const Hash256& tx_id) const {
  refresh_index();
  return confirmed_.count(tx_id) != 0;
}

std::optional<std::uint64_t> LocalLedger::confirmation_height(const Hash256& tx_id) const {
  refresh_index();
  auto it = confirmed_.find(tx_id);
  if (it == confirmed_.end()) return std::nullopt;
  return it->second;
}

std::size_t LocalLedger::pending_count() const {
  refresh_index();
  return static_cast<std::size_t>(std::count_if(mempool_.begin(), mempool_.end(), [&](const auto& t) {
    return confirmed_.count(t.tx_id) == 0;
  }));
}

std::vector<Transaction> LocalLedger::canonical_transactions() const {
  std::vector<Transaction> out;
  auto head = store_.canonical_head();
  if (!head) return out;
  for (const auto& h : store_.path_to(*head))
    for (const auto& tx : store_.find(h)->txs) out.push_back(tx);
  return out;
}

void BlockLog::append(const Block& block) const {
  try {
    JsonlFile(path_).append(block.to_json());
  } catch (const std::runtime_error& e) {
    throw LedgerError(LedgerErrc::LedgerUnavailable, e.what());
  }
}

std::vector<Block> BlockLog::load(const std::string& path, bool repair) {
  std::vector<Block> blocks;
  try {
    for (const auto& j : JsonlFile::load(path, repair)) blocks.push_back(Block::from_json(j));
  } catch (const JsonlCorrupt& e) {
    throw LedgerError(LedgerErrc::Corrupt, e.what());
  } catch (const std::invalid_argument& e) {
    throw LedgerError(LedgerErrc::Corrupt, path + ": " + e.what());
  }
  return blocks;
}

}  // namespace emarket::ledger

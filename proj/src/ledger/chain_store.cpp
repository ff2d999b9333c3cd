#include "emarket/ledger/chain_store.hpp"

#include <algorithm>

namespace emarket::ledger {

namespace {

LedgerErrc errc_for(BlockCheck c) {
  switch (c) {
    case BlockCheck::BadDifficulty: return LedgerErrc::BadDifficulty;
    case BlockCheck::InvalidPow: return LedgerErrc::InvalidPow;
    case BlockCheck::BadTxRoot: return LedgerErrc::BadTxRoot;
    case BlockCheck::InvalidTx: return LedgerErrc::InvalidTx;
    case BlockCheck::BadGenesis: return LedgerErrc::BadHeight;
    case BlockCheck::Ok: break;
  }
  return LedgerErrc::Corrupt;
}

std::string describe(const BlockCheckResult& r) {
  std::string s = to_string(r.check);
  if (r.tx_index) s += " (tx " + std::to_string(*r.tx_index) + ": " + to_string(r.tx_check) + ")";
  return s;
}

}  // namespace

ChainStore::ChainStore(std::shared_ptr<const KeyDirectory> keys, std::size_t staging_capacity)
    : keys_(std::move(keys)), staging_capacity_(staging_capacity) {
  if (!keys_) keys_ = std::make_shared<KeyDirectory>();
}

ChainStore::AppendResult ChainStore::append_block(const Block& block) {
  AppendResult result;
  const auto hash = block.hash();
  if (blocks_.count(hash) != 0 || is_staged(hash)) {
    result.status = AppendStatus::Duplicate;
    return result;
  }

  auto check = check_block(block, *keys_);
  if (!check.ok()) throw LedgerError(errc_for(check.check), "block rejected: " + describe(check));

  if (block.is_genesis()) {
    if (genesis_ && *genesis_ != hash)
      throw LedgerError(LedgerErrc::GenesisMismatch, "store already has a different genesis");
    connect(block, hash, result);
    flush_staged(hash, result);
    return result;
  }

  const auto* parent = find(block.parent_hash);
  if (parent == nullptr) {
    stage(block, hash);
    result.status = AppendStatus::Staged;
    return result;
  }
  if (block.height != parent->height + 1)
    throw LedgerError(LedgerErrc::BadHeight, "height " + std::to_string(block.height) +
                                                 " does not follow parent height " +
                                                 std::to_string(parent->height));
  connect(block, hash, result);
  flush_staged(hash, result);
  return result;
}

void ChainStore::connect(const Block& block, const Hash256& hash, AppendResult& result) {
  auto arrival = next_arrival_++;
  blocks_.emplace(hash, Entry{block, arrival});
  if (block.is_genesis()) genesis_ = hash;
  result.connected.push_back(hash);

  if (!head_) {
    head_ = hash;
    return;
  }
  // A newly connected block always has the largest arrival index, so it only
  // takes the head on strictly greater height.
  if (block.height > blocks_.at(*head_).block.height) head_ = hash;
}

void ChainStore::stage(const Block& block, const Hash256& hash) {
  if (staging_capacity_ == 0) return;
  while (staged_order_.size() >= staging_capacity_) {
    auto [old_hash, old_parent] = staged_order_.front();
    staged_order_.pop_front();
    auto it = staged_by_parent_.find(old_parent);
    if (it != staged_by_parent_.end()) {
      auto& v = it->second;
      v.erase(std::remove_if(v.begin(), v.end(), [&](const auto& p) { return p.first == old_hash; }),
              v.end());
      if (v.empty()) staged_by_parent_.erase(it);
    }
  }
  staged_by_parent_[block.parent_hash].emplace_back(hash, block);
  staged_order_.emplace_back(hash, block.parent_hash);
}

void ChainStore::flush_staged(const Hash256& parent, AppendResult& result) {
  std::vector<Hash256> frontier{parent};
  while (!frontier.empty()) {
    auto p = frontier.back();
    frontier.pop_back();
    auto it = staged_by_parent_.find(p);
    if (it == staged_by_parent_.end()) continue;
    auto children = std::move(it->second);
    staged_by_parent_.erase(it);
    const auto parent_height = blocks_.at(p).block.height;
    for (auto& [h, b] : children) {
      staged_order_.erase(std::remove_if(staged_order_.begin(), staged_order_.end(),
                                         [&](const auto& e) { return e.first == h; }),
                          staged_order_.end());
      if (blocks_.count(h) != 0) continue;
      if (b.height != parent_height + 1) {
        result.dropped.push_back(h);
        continue;
      }
      connect(b, h, result);
      frontier.push_back(h);
    }
  }
}

bool ChainStore::is_staged(const Hash256& hash) const {
  return std::any_of(staged_order_.begin(), staged_order_.end(),
                     [&](const auto& e) { return e.first == hash; });
}

const Block* ChainStore::find(const Hash256& hash) const {
  auto it = blocks_.find(hash);
  return it == blocks_.end() ? nullptr : &it->second.block;
}

const ChainStore::Entry* ChainStore::entry(const Hash256& hash) const {
  auto it = blocks_.find(hash);
  return it == blocks_.end() ? nullptr : &it->second;
}

const Block& ChainStore::head_block() const {
  if (!head_) throw LedgerError(LedgerErrc::NotFound, "store is empty");
  return blocks_.at(*head_).block;
}

std::vector<Hash256> ChainStore::path_to(const Hash256& tip) const {
  std::vector<Hash256> path;
  const Block* b = find(tip);
  if (b == nullptr) throw LedgerError(LedgerErrc::NotFound, "tip " + tip.hex() + " not in store");
  Hash256 cur = tip;
  while (true) {
    path.push_back(cur);
    if (b->is_genesis()) break;
    cur = b->parent_hash;
    b = find(cur);
    if (b == nullptr) throw LedgerError(LedgerErrc::Corrupt, "broken parent link at " + cur.hex());
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<Block> ChainStore::chain_to(const Hash256& tip) const {
  std::vector<Block> out;
  for (const auto& h : path_to(tip)) out.push_back(blocks_.at(h).block);
  return out;
}

Hash256 fork_choice(const ChainStore& store) {
  if (store.empty()) throw LedgerError(LedgerErrc::NotFound, "fork_choice on empty store");
  const ChainStore::Entry* best = nullptr;
  Hash256 best_hash;
  for (const auto& [hash, e] : store.entries()) {
    if (best == nullptr || e.block.height > best->block.height ||
        (e.block.height == best->block.height && e.arrival_index < best->arrival_index)) {
      best = &e;
      best_hash = hash;
    }
  }
  return best_hash;
}

VerifyReport verify_chain(std::span<const Block> chain, const KeyDirectory& keys) {
  VerifyReport report;
  auto fail = [&](std::uint64_t height, std::string why) {
    report.ok = false;
    report.failed_height = height;
    report.reason = std::move(why);
    return report;
  };
  if (chain.empty()) {
    report.ok = false;
    report.reason = "empty chain";
    return report;
  }
  Hash256 prev_hash;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& b = chain[i];
    if (b.height != i) return fail(b.height, "height " + std::to_string(b.height) +
                                                 " at position " + std::to_string(i));
    if (i == 0) {
      if (!b.parent_hash.is_zero()) return fail(0, "genesis parent hash is not zero");
    } else if (b.parent_hash != prev_hash) {
      return fail(b.height, "parent hash does not match predecessor");
    }
    auto check = check_block(b, keys);
    if (!check.ok()) return fail(b.height, describe(check));
    prev_hash = b.hash();
  }
  return report;
}

VerifyReport verify_chain(const ChainStore& store, const Hash256& tip) {
  if (!store.contains(tip)) {
    VerifyReport r;
    r.ok = false;
    r.reason = "tip not in store";
    return r;
  }
  auto chain = store.chain_to(tip);
  return verify_chain(chain, store.keys());
}

}  // namespace emarket::ledger

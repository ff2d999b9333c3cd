#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "emarket/ledger/chain_store.hpp"

namespace emarket::ledger {

// Where modules send the transactions that anchor their state changes.
class LedgerPort {
 public:
  virtual ~LedgerPort() = default;
  // Signs and queues a transaction; returns its tx_id. Throws
  // LedgerError{LedgerUnavailable} when the ledger does not accept work.
  virtual Hash256 submit(TxKind kind, Json payload, const AccountId& author) = 0;
};

// Blocks on top of a confirmation before its transaction leaves the mempool.
inline constexpr std::uint64_t kBurialDepth = 12;

struct LocalLedgerConfig {
  unsigned difficulty_bits = 8;
  std::uint64_t start_nonce = 0;
  bool parallel_mining = true;
};

// Operator-side ledger client: a mempool of custodially signed transactions
// mined onto the canonical head of a ChainStore it does not own.
class LocalLedger : public LedgerPort {
 public:
  using Publisher = std::function<void(const Block&)>;

  LocalLedger(ChainStore& store, const KeyRing& keyring, LocalLedgerConfig config = {},
              Publisher publish = {});

  Hash256 submit(TxKind kind, Json payload, const AccountId& author) override;

  // Seals every pending transaction not yet on the canonical chain into a
  // block on the current head. Returns nullopt when halted or nothing is
  // pending (unless force).
  std::optional<Block> mine(bool force = false);

  bool is_confirmed(const Hash256& tx_id) const;
  std::optional<std::uint64_t> confirmation_height(const Hash256& tx_id) const;
  std::size_t pending_count() const;

  void set_time(std::int64_t now) { now_ = now; }
  std::int64_t time() const { return now_; }
  void set_mining_enabled(bool on) { mining_enabled_ = on; }
  bool mining_enabled() const { return mining_enabled_; }
  void set_available(bool on) { available_ = on; }

  const ChainStore& store() const { return store_; }
  const LocalLedgerConfig& config() const { return config_; }

  // Transactions on the canonical chain, genesis first.
  std::vector<Transaction> canonical_transactions() const;

 private:
  void refresh_index() const;

  ChainStore& store_;
  const KeyRing& keyring_;
  LocalLedgerConfig config_;
  Publisher publish_;
  std::int64_t now_ = 0;
  bool mining_enabled_ = true;
  bool available_ = true;

  std::vector<Transaction> mempool_;  // submission order

  mutable std::optional<Hash256> indexed_head_;
  mutable std::map<Hash256, std::uint64_t> confirmed_;  // tx_id -> block height
};

// Append-only file of canonical-JSON blocks, one per line.
class BlockLog {
 public:
  explicit BlockLog(std::string path) : path_(std::move(path)) {}
  void append(const Block& block) const;
  const std::string& path() const { return path_; }

  // A torn final line (crash mid-write) is ignored, and with repair also
  // truncated; any other malformed line throws LedgerError{Corrupt}.
  static std::vector<Block> load(const std::string& path, bool repair = false);

 private:
  std::string path_;
};

}  // namespace emarket::ledger

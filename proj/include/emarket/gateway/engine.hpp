#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "emarket/agreements/agreement.hpp"
#include "emarket/common/jsonl.hpp"
#include "emarket/gateway/config.hpp"
#include "emarket/ledger/local_ledger.hpp"
#include "emarket/marketplace/marketplace.hpp"
#include "emarket/metering/device.hpp"
#include "emarket/netsim/simulation.hpp"
#include "emarket/settlement/settlement.hpp"

namespace emarket::gateway {

using agreements::Agreement;
using settlement::Invoice;

// Thrown for malformed requests that no module owns (bad JSON shapes, unknown
// devices for simulated readings, ...).
class BadRequest : public std::runtime_error {
 public:
  BadRequest(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct NotFound : BadRequest {
  using BadRequest::BadRequest;
};

// The operator's ledger node. Custodial keys, the chain store and the block
// log sit behind one mutex; nothing else in the engine takes it.
class LedgerNode : public ledger::LedgerPort {
 public:
  using OnBlock = std::function<void(const ledger::Block&)>;

  // store == nullptr: the node owns a private single-node chain.
  LedgerNode(const ServiceConfig& config, std::shared_ptr<ledger::KeyDirectory> keys, ledger::ChainStore* store,
             std::optional<std::string> block_log, OnBlock on_block = {});

  Hash256 submit(ledger::TxKind kind, Json payload, const AccountId& author) override;

  // Derives and registers the custodial key; idempotent.
  PublicKey add_account(const AccountId& account);
  std::optional<crypto::SigningKey> custodial_key(const AccountId& account) const;

  // Seals pending transactions; returns the canonical height afterwards.
  std::int64_t mine();
  std::int64_t height() const;
  Hash256 head() const;
  std::optional<ledger::Block> block(const Hash256& hash) const;
  bool is_confirmed(const Hash256& tx_id) const;
  std::size_t pending() const;
  std::vector<ledger::Transaction> canonical_transactions() const;
  // Replays persisted blocks; returns how many were connected.
  std::size_t load_blocks(const std::vector<ledger::Block>& blocks);

  // Runs fn with the node lock held (the simulation shares node 0's store).
  template <class F>
  auto locked(F&& fn) const {
    std::lock_guard lock(mu_);
    return fn();
  }

 private:
  void clock_from_head();

  mutable std::mutex mu_;
  const ServiceConfig& config_;
  std::shared_ptr<ledger::KeyDirectory> keys_;
  std::unique_ptr<ledger::ChainStore> own_store_;
  ledger::ChainStore* store_;
  std::optional<ledger::BlockLog> log_;
  ledger::KeyRing ring_;
  std::unique_ptr<ledger::LocalLedger> local_;
};

struct DeviceView {
  metering::MeterDevice device;
  metering::AttestationQuote quote;
  bool simulated = false;  // the gateway holds the device key

  Json to_json() const;
};

struct ReadingOutcome {
  metering::IngestResult ingest;
  std::optional<Invoice> invoice;
  std::string settlement;  // why no invoice was produced, when none was

  Json to_json() const;
};

struct RedeemOutcome {
  std::int64_t amount_c = 0;
  settlement::AccountBalance balance;
};

// Every mutation funnels through the owning module's own lock; the engine
// adds per-agreement settlement locks and a store lock for persistence.
class Engine {
 public:
  explicit Engine(ServiceConfig config, std::optional<netsim::NetworkConfig> network = std::nullopt);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const ServiceConfig& config() const { return config_; }

  marketplace::UserProfile register_user(marketplace::UserProfile profile);
  std::optional<marketplace::UserProfile> user(const AccountId& account) const;

  // Provisions a simulated meter from the built-in dev manufacturer.
  DeviceView provision_device(const std::string& firmware_manifest, const std::string& premises_id);
  // Enrolls an externally provisioned meter.
  DeviceView enroll_device(const metering::MeterDevice& device, const metering::AttestationQuote& quote);
  // Signs fields with a simulated meter's key; sequence 0 means "next".
  metering::MeterReading simulate_reading(metering::ReadingFields fields);
  // Ingests; an accepted reading for the current period of the premises'
  // active agreement is settled. pay = false models the payer refusing.
  ReadingOutcome submit_reading(const metering::MeterReading& reading, bool pay = true);

  marketplace::Listing post_listing(marketplace::Listing listing);
  marketplace::Request post_request(marketplace::Request request);
  marketplace::Listing withdraw_listing(const std::string& id, const AccountId& by);
  std::vector<marketplace::Listing> search(const std::optional<std::string>& region,
                                           const std::optional<metering::Source>& source) const;
  std::vector<marketplace::MatchProposal> matches(const std::string& request_id) const;

  Agreement accept_match(const std::string& listing_id, const std::string& request_id, std::int64_t start_period = 1);
  Agreement propose(agreements::Parties parties, agreements::Terms terms, std::string premises_id,
                    std::int64_t start_period = 1);
  // signature == nullopt: sign with the party's custodial key.
  Agreement sign_agreement(const Hash256& id, const AccountId& party, const std::optional<Signature>& signature);
  Agreement terminate_agreement(const Hash256& id, std::int64_t at_period,
                                const std::map<AccountId, Signature>& signatures);
  std::optional<Agreement> agreement(const Hash256& id) const;
  std::vector<Agreement> agreements() const;

  std::vector<Invoice> invoices(const std::optional<AccountId>& account,
                                const std::optional<std::uint64_t>& period) const;
  std::optional<Invoice> invoice(const Hash256& id) const;
  RedeemOutcome redeem(const AccountId& account, std::int64_t amount_mt, settlement::RedeemMode mode);
  settlement::AccountBalance balance(const AccountId& account) const;
  std::vector<settlement::AccountBalance> balances() const;
  marketplace::UserProfile rate(const AccountId& rater, const Hash256& agreement_id, std::int64_t period_id,
                                std::int64_t stars);

  // Mines pending work and resolves invoices it confirmed or timed out.
  void pump();
  // With auto-mining off, blocks are only sealed by pump().
  void set_auto_mine(bool on) { auto_mine_ = on; }

  LedgerNode& ledger() { return *ledger_; }
  const LedgerNode& ledger() const { return *ledger_; }
  netsim::Simulation* simulation() { return sim_.get(); }
  const netsim::Simulation* simulation() const { return sim_.get(); }
  const metering::MeterRegistry& meters() const { return *meters_; }
  const marketplace::Marketplace& market() const { return *market_; }

 private:
  struct Ref {
    std::string type;
    std::string id;
    Json record = nullptr;  // null: read the live state at write time
  };

  void finalize(const std::vector<Invoice>& resolved);
  std::mutex& settle_lock(const Hash256& key);
  void persist(const std::vector<Ref>& refs);
  Json resolve(const Ref& ref) const;
  void restore();
  std::int64_t token_rate() const { return config_.token_rate_c; }

  void after_mutation() {
    if (auto_mine_) pump();
  }

  ServiceConfig config_;
  bool auto_mine_ = true;
  std::shared_ptr<ledger::KeyDirectory> keys_;
  std::unique_ptr<netsim::Simulation> sim_;
  std::unique_ptr<LedgerNode> ledger_;

  crypto::SigningKey root_;
  std::unique_ptr<metering::MeterRegistry> meters_;
  std::unique_ptr<marketplace::Marketplace> market_;
  std::unique_ptr<agreements::AgreementBook> book_;
  std::unique_ptr<settlement::AccountBook> accounts_;
  std::unique_ptr<settlement::SettlementTracker> tracker_;

  mutable std::mutex devices_mu_;
  metering::DeviceFactory factory_;
  std::map<DeviceId, crypto::SigningKey> device_keys_;
  std::map<DeviceId, metering::AttestationQuote> quotes_;

  mutable std::mutex settle_mu_;
  std::map<Hash256, std::unique_ptr<std::mutex>> settle_locks_;
  std::set<std::pair<Hash256, std::uint64_t>> in_flight_;  // (agreement, period) posted, unresolved

  mutable std::mutex store_mu_;
  std::optional<JsonlFile> store_;
  std::uint64_t store_seq_ = 0;
};

}  // namespace emarket::gateway

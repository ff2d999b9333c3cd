#include "emarket/gateway/engine.hpp"

#include <algorithm>
#include <filesystem>

#include "emarket/common/arith.hpp"

namespace emarket::gateway {

namespace {

const std::set<AccountId> kSystemAccounts{"operator", "treasury", "market"};

std::string seed_tag(std::uint64_t seed) { return "emarket/" + std::to_string(seed); }

std::string path_in(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

std::vector<settlement::EnergyCredit> credits_used(const Invoice& inv) {
  std::vector<settlement::EnergyCredit> out;
  for (const auto& l : inv.line_items)
    if (l.label == "energy_credit" && l.amount_c > 0) out.push_back({l.payee, l.amount_c});
  return out;
}

std::string rating_id(const marketplace::Rating& r) {
  return r.rater + "/" + r.agreement_id.hex() + "/" + std::to_string(r.period_id);
}

Json posted_json(const settlement::PostedInvoice& p) {
  Json ids = Json::array();
  for (const auto& t : p.tx_ids) ids.push_back(t.hex());
  return {{"invoice", p.invoice.to_json()}, {"posted_slot", p.posted_slot}, {"tx_ids", ids}};
}

settlement::PostedInvoice posted_from(const Json& j) {
  settlement::PostedInvoice p;
  p.invoice = Invoice::from_json(require_field(j, "invoice"));
  p.posted_slot = j.contains("posted_slot") ? require_int(j, "posted_slot") : 0;
  if (j.contains("tx_ids"))
    for (const auto& t : j.at("tx_ids")) p.tx_ids.push_back(Hash256::from_hex(t.get<std::string>()));
  return p;
}

}  // namespace

LedgerNode::LedgerNode(const ServiceConfig& config, std::shared_ptr<ledger::KeyDirectory> keys,
                       ledger::ChainStore* store, std::optional<std::string> block_log, OnBlock on_block)
    : config_(config), keys_(std::move(keys)), store_(store) {
  if (!store_) {
    own_store_ = std::make_unique<ledger::ChainStore>(keys_);
    own_store_->append_block(ledger::make_genesis());
    store_ = own_store_.get();
  }
  if (block_log) log_.emplace(*block_log);
  ledger::LocalLedgerConfig lc;
  lc.difficulty_bits = config_.difficulty_bits;
  auto publish = [this, on_block = std::move(on_block)](const ledger::Block& b) {
    store_->append_block(b);
    if (log_) log_->append(b);
    if (on_block) on_block(b);
  };
  local_ = std::make_unique<ledger::LocalLedger>(*store_, ring_, lc, publish);
  for (const auto& a : kSystemAccounts) add_account(a);
  std::lock_guard lock(mu_);
  clock_from_head();
}

void LedgerNode::clock_from_head() {
  const auto& head = store_->head_block();
  local_->set_time(config_.genesis_time + static_cast<std::int64_t>(head.height + 1) * config_.block_interval_s);
}

Hash256 LedgerNode::submit(ledger::TxKind kind, Json payload, const AccountId& author) {
  std::lock_guard lock(mu_);
  if (!ring_.find(author))
    throw ledger::LedgerError(ledger::LedgerErrc::UnknownAccount, "no custodial key for '" + author + "'");
  clock_from_head();
  return local_->submit(kind, std::move(payload), author);
}

PublicKey LedgerNode::add_account(const AccountId& account) {
  std::lock_guard lock(mu_);
  if (const auto* k = ring_.find(account)) return k->public_key();
  const auto& k = ring_.derive(account, seed_tag(config_.seed));
  keys_->register_key(account, k.public_key());
  return k.public_key();
}

std::optional<crypto::SigningKey> LedgerNode::custodial_key(const AccountId& account) const {
  std::lock_guard lock(mu_);
  if (const auto* k = ring_.find(account)) return *k;
  return std::nullopt;
}

std::int64_t LedgerNode::mine() {
  std::lock_guard lock(mu_);
  clock_from_head();
  local_->mine();
  clock_from_head();
  return static_cast<std::int64_t>(store_->head_block().height);
}

std::int64_t LedgerNode::height() const {
  std::lock_guard lock(mu_);
  return static_cast<std::int64_t>(store_->head_block().height);
}

Hash256 LedgerNode::head() const {
  std::lock_guard lock(mu_);
  return *store_->canonical_head();
}

std::optional<ledger::Block> LedgerNode::block(const Hash256& hash) const {
  std::lock_guard lock(mu_);
  if (const auto* b = store_->find(hash)) return *b;
  return std::nullopt;
}

bool LedgerNode::is_confirmed(const Hash256& tx_id) const {
  std::lock_guard lock(mu_);
  return local_->is_confirmed(tx_id);
}

std::size_t LedgerNode::pending() const {
  std::lock_guard lock(mu_);
  return local_->pending_count();
}

std::vector<ledger::Transaction> LedgerNode::canonical_transactions() const {
  std::lock_guard lock(mu_);
  return local_->canonical_transactions();
}

std::size_t LedgerNode::load_blocks(const std::vector<ledger::Block>& blocks) {
  std::lock_guard lock(mu_);
  std::size_t added = 0;
  for (const auto& b : blocks) {
    if (b.is_genesis()) continue;
    auto r = store_->append_block(b);
    added += r.status == ledger::ChainStore::AppendStatus::Added;
  }
  clock_from_head();
  return added;
}

Json DeviceView::to_json() const {
  return {{"device", device.to_json()}, {"quote", quote.to_json()}, {"simulated", simulated}};
}

Json ReadingOutcome::to_json() const {
  Json j = {{"accepted", ingest.accepted}, {"reading_hash", ingest.reading_hash.hex()}};
  if (ingest.reason) j["reason"] = metering::to_string(*ingest.reason);
  if (ingest.commit_tx) j["commit_tx"] = ingest.commit_tx->hex();
  if (invoice) j["invoice"] = invoice->to_json();
  if (!settlement.empty()) j["settlement"] = settlement;
  return j;
}

Engine::Engine(ServiceConfig config, std::optional<netsim::NetworkConfig> network)
    : config_(std::move(config)),
      keys_(std::make_shared<ledger::KeyDirectory>()),
      root_(crypto::SigningKey::from_seed(crypto::derive("emarket/manufacturer-root", seed_tag(config_.seed)))),
      factory_(seed_tag(config_.seed) + "/devices") {
  config_.validate();
  ledger::ChainStore* store = nullptr;
  LedgerNode::OnBlock on_block;
  if (network) {
    network->difficulty_bits = config_.difficulty_bits;
    sim_ = std::make_unique<netsim::Simulation>(*network, keys_);
    store = &sim_->node(0).store;
    on_block = [this](const ledger::Block& b) { sim_->broadcast(0, b); };
  }
  std::optional<std::string> log_path;
  if (!config_.data_dir.empty()) log_path = path_in(config_.data_dir, "ledger.jsonl");
  ledger_ = std::make_unique<LedgerNode>(config_, keys_, store, log_path, std::move(on_block));

  metering::FirmwareWhitelist whitelist;
  for (const auto& m : config_.firmware) whitelist.allow(m);
  meters_ = std::make_unique<metering::MeterRegistry>(config_.root_pubkey.value_or(root_.public_key()), whitelist,
                                                      ledger_.get(), "operator");
  market_ = std::make_unique<marketplace::Marketplace>(*ledger_, "operator");
  book_ = std::make_unique<agreements::AgreementBook>(keys_, *ledger_, "operator");
  accounts_ = std::make_unique<settlement::AccountBook>();
  tracker_ = std::make_unique<settlement::SettlementTracker>(*ledger_, config_.confirm_timeout, "treasury");

  if (!config_.data_dir.empty()) restore();
}

Engine::~Engine() = default;

// ---- users and devices ----

marketplace::UserProfile Engine::register_user(marketplace::UserProfile profile) {
  if (kSystemAccounts.count(profile.account) != 0)
    throw BadRequest("ReservedAccount", "'" + profile.account + "' is reserved for the operator");
  auto stored = market_->register_user(std::move(profile));
  ledger_->add_account(stored.account);
  persist({{"user", stored.account}});
  return stored;
}

std::optional<marketplace::UserProfile> Engine::user(const AccountId& account) const { return market_->user(account); }

DeviceView Engine::provision_device(const std::string& firmware_manifest, const std::string& premises_id) {
  if (premises_id.empty()) throw BadRequest("InvalidFields", "premises_id must be non-empty");
  if (meters_->root_pubkey() != root_.public_key())
    throw BadRequest("ProvisioningDisabled", "a custom manufacturer root is configured; enroll quotes instead");
  DeviceView view;
  {
    std::lock_guard lock(devices_mu_);
    auto p = factory_.provision(firmware_manifest, premises_id, root_, meters_->whitelist());
    auto check = meters_->enroll(p.device, p.quote);
    if (!check) throw BadRequest("AttestationFailed", check.reason);
    device_keys_.emplace(p.device.device_id, p.key);
    quotes_[p.device.device_id] = p.quote;
    view = {p.device, p.quote, true};
  }
  persist({{"device", view.device.device_id.hex()}, {"factory", "devices"}});
  after_mutation();
  return view;
}

DeviceView Engine::enroll_device(const metering::MeterDevice& device, const metering::AttestationQuote& quote) {
  {
    std::lock_guard lock(devices_mu_);
    auto check = meters_->enroll(device, quote);
    if (!check) throw BadRequest("AttestationFailed", check.reason);
    quotes_[device.device_id] = quote;
  }
  persist({{"device", device.device_id.hex()}});
  after_mutation();
  return {device, quote, false};
}

metering::MeterReading Engine::simulate_reading(metering::ReadingFields fields) {
  std::lock_guard lock(devices_mu_);
  auto it = device_keys_.find(fields.device_id);
  if (it == device_keys_.end())
    throw NotFound("UnknownDevice", "no simulated meter " + fields.device_id.hex());
  if (fields.sequence == 0) fields.sequence = meters_->last_sequence(fields.device_id) + 1;
  return metering::sign_reading(it->second, std::move(fields));
}

// ---- readings and settlement ----

std::mutex& Engine::settle_lock(const Hash256& key) {
  std::lock_guard lock(settle_mu_);
  auto& m = settle_locks_[key];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

ReadingOutcome Engine::submit_reading(const metering::MeterReading& reading, bool pay) {
  ReadingOutcome out;
  out.ingest = meters_->ingest(reading);
  if (!out.ingest.accepted) return out;
  persist({{"reading", reading.device_id.hex() + "/" + std::to_string(reading.sequence), reading.to_json()}});

  const auto* device = meters_->find(reading.device_id);
  std::optional<Hash256> invoice_id;
  if (auto active = book_->active_for_premises(device->premises_id); !active) {
    out.settlement = "no active agreement for premises " + device->premises_id;
  } else {
    std::lock_guard lock(settle_lock(active->agreement_id));
    auto a = book_->get(active->agreement_id);
    const auto key = std::make_pair(a.agreement_id, reading.period_id);
    bool busy;
    {
      std::lock_guard g(settle_mu_);
      busy = in_flight_.count(key) != 0;
    }
    if (a.state != agreements::AgreementState::Active) {
      out.settlement = std::string("agreement is ") + agreements::to_string(a.state);
    } else if (static_cast<std::int64_t>(reading.period_id) != a.current_period()) {
      out.settlement = "period " + std::to_string(reading.period_id) + " is not the agreement's current period " +
                       std::to_string(a.current_period());
    } else if (busy) {
      out.settlement = "period " + std::to_string(reading.period_id) + " is already being settled";
    } else {
      std::vector<AccountId> principals{a.parties.owner, a.parties.consumer};
      auto credits = accounts_->take_credits(principals);
      Invoice inv;
      try {
        inv = settlement::settle_period(a, &reading, config_.policy, accounts_->accounts(), credits);
      } catch (...) {
        accounts_->return_credits(credits);
        throw;
      }
      invoice_id = inv.invoice_id;
      if (!pay) {
        auto refused = tracker_->refuse(inv);
        {
          std::lock_guard g(settle_mu_);
          in_flight_.insert(key);
        }
        persist({{"invoice", inv.invoice_id.hex(), {{"invoice", refused.to_json()}}}, {"book", "accounts"}});
        out.invoice = refused;
      } else {
        settlement::PostedInvoice posted;
        try {
          posted = tracker_->post(inv, ledger_->height());
        } catch (...) {
          accounts_->return_credits(credits);
          throw;
        }
        {
          std::lock_guard g(settle_mu_);
          in_flight_.insert(key);
        }
        persist({{"invoice", inv.invoice_id.hex(), posted_json(posted)}, {"book", "accounts"}});
      }
    }
  }

  if (out.invoice && out.invoice->status == settlement::InvoiceStatus::Unpaid) finalize({*out.invoice});
  after_mutation();
  if (invoice_id) out.invoice = tracker_->find(*invoice_id);
  return out;
}

void Engine::finalize(const std::vector<Invoice>& resolved) {
  for (const auto& inv : resolved) {
    std::lock_guard lock(settle_lock(inv.agreement_id));
    {
      std::lock_guard g(settle_mu_);
      in_flight_.erase({inv.agreement_id, inv.period_id});
    }
    const bool paid = inv.status == settlement::InvoiceStatus::Paid;
    if (paid) accounts_->apply_paid(inv);
    else accounts_->return_credits(credits_used(inv));
    try {
      book_->advance_period(inv.agreement_id,
                            paid ? agreements::PeriodResult::Paid : agreements::PeriodResult::Unpaid,
                            inv.invoice_id);
    } catch (const agreements::AgreementError& e) {
      // Terminated while the invoice was outstanding: the invoice still resolves.
      if (e.code() != agreements::AgreementErrc::NotActive) throw;
    }
    persist({{"invoice", inv.invoice_id.hex(), {{"invoice", inv.to_json()}}},
             {"agreement", inv.agreement_id.hex()},
             {"book", "accounts"}});
  }
}

void Engine::pump() {
  for (int round = 0; round < 3; ++round) {
    auto height = ledger_->mine();
    auto resolved = tracker_->poll(height, [this](const Hash256& id) { return ledger_->is_confirmed(id); });
    finalize(resolved);
    if (resolved.empty() && ledger_->pending() == 0) break;
  }
}

// ---- marketplace ----

marketplace::Listing Engine::post_listing(marketplace::Listing listing) {
  auto l = market_->post_listing(std::move(listing));
  persist({{"listing", l.listing_id}});
  after_mutation();
  return l;
}

marketplace::Request Engine::post_request(marketplace::Request request) {
  auto r = market_->post_request(std::move(request));
  persist({{"request", r.request_id}});
  after_mutation();
  return r;
}

marketplace::Listing Engine::withdraw_listing(const std::string& id, const AccountId& by) {
  auto l = market_->withdraw_listing(id, by);
  persist({{"listing", l.listing_id}});
  return l;
}

std::vector<marketplace::Listing> Engine::search(const std::optional<std::string>& region,
                                                 const std::optional<metering::Source>& source) const {
  return market_->search_listings(region, source);
}

std::vector<marketplace::MatchProposal> Engine::matches(const std::string& request_id) const {
  return market_->matches(request_id);
}

// ---- agreements ----

Agreement Engine::accept_match(const std::string& listing_id, const std::string& request_id,
                               std::int64_t start_period) {
  auto a = market_->accept_match(listing_id, request_id, start_period);
  book_->add(a);
  persist({{"listing", listing_id}, {"request", request_id}, {"agreement", a.agreement_id.hex()}});
  after_mutation();
  return a;
}

Agreement Engine::propose(agreements::Parties parties, agreements::Terms terms, std::string premises_id,
                          std::int64_t start_period) {
  for (const auto& who : parties.named())
    if (!market_->user(who)) throw NotFound("UnknownUser", "unknown user '" + who + "'");
  auto a = agreements::propose_agreement(std::move(parties), std::move(terms), std::move(premises_id), start_period);
  book_->add(a);
  persist({{"agreement", a.agreement_id.hex()}});
  return a;
}

Agreement Engine::sign_agreement(const Hash256& id, const AccountId& party, const std::optional<Signature>& signature) {
  Signature sig;
  if (signature) {
    sig = *signature;
  } else {
    auto key = ledger_->custodial_key(party);
    if (!key) throw agreements::AgreementError(agreements::AgreementErrc::UnknownParty, "no key for '" + party + "'");
    sig = key->sign(id);
  }
  auto a = book_->sign(id, party, sig);
  persist({{"agreement", id.hex()}});
  after_mutation();
  return a;
}

Agreement Engine::terminate_agreement(const Hash256& id, std::int64_t at_period,
                                      const std::map<AccountId, Signature>& signatures) {
  auto current = book_->get(id);
  agreements::TerminationNotice notice{at_period, signatures};
  for (const auto& who : {current.parties.owner, current.parties.consumer}) {
    if (notice.signatures.count(who) != 0) continue;
    if (auto key = ledger_->custodial_key(who)) notice.signatures[who] = agreements::sign_termination(*key, id, at_period);
  }
  auto a = book_->terminate(id, notice);
  persist({{"agreement", id.hex()}});
  after_mutation();
  return a;
}

std::optional<Agreement> Engine::agreement(const Hash256& id) const { return book_->find(id); }

std::vector<Agreement> Engine::agreements() const { return book_->list(); }

// ---- invoices, tokens, ratings ----

std::vector<Invoice> Engine::invoices(const std::optional<AccountId>& account,
                                      const std::optional<std::uint64_t>& period) const {
  std::vector<Invoice> out;
  for (auto& inv : tracker_->invoices()) {
    if (account && !inv.involves(*account)) continue;
    if (period && inv.period_id != *period) continue;
    out.push_back(std::move(inv));
  }
  return out;
}

std::optional<Invoice> Engine::invoice(const Hash256& id) const { return tracker_->find(id); }

RedeemOutcome Engine::redeem(const AccountId& account, std::int64_t amount_mt, settlement::RedeemMode mode) {
  if (amount_mt < 0) throw BadRequest("InvalidFields", "amount_mt must be non-negative");
  // Serialised per account so the balance check and the ledger entry agree.
  std::lock_guard lock(settle_lock(canonical_hash(Json{{"redeem", account}})));
  const auto held = accounts_->balance(account).tokens_mt;
  if (held < amount_mt)
    throw settlement::SettlementError(settlement::SettlementErrc::InsufficientTokens,
                                      "'" + account + "' holds " + std::to_string(held) + " mt");
  if (mode == settlement::RedeemMode::Cash && amount_mt > 0) {
    auto cash = div_round_half_up(static_cast<__int128>(amount_mt) * config_.token_rate_c, 1000);
    ledger_->submit(ledger::TxKind::Payment,
                    {{"amount_c", cash}, {"label", "token_redemption"}, {"payee", account}, {"payer", "treasury"},
                     {"tokens_mt", amount_mt}},
                    "treasury");
  }
  RedeemOutcome out;
  out.amount_c = accounts_->redeem_tokens(account, amount_mt, mode, config_.token_rate_c);
  out.balance = accounts_->balance(account);
  persist({{"book", "accounts"}});
  after_mutation();
  return out;
}

settlement::AccountBalance Engine::balance(const AccountId& account) const { return accounts_->balance(account); }

std::vector<settlement::AccountBalance> Engine::balances() const { return accounts_->balances(); }

marketplace::UserProfile Engine::rate(const AccountId& rater, const Hash256& agreement_id, std::int64_t period_id,
                                      std::int64_t stars) {
  auto a = book_->get(agreement_id);
  bool settled = false;
  for (const auto& inv : tracker_->invoices())
    if (inv.agreement_id == agreement_id && static_cast<std::int64_t>(inv.period_id) == period_id &&
        inv.status != settlement::InvoiceStatus::Issued)
      settled = true;
  auto ratee = market_->rate(rater, a, period_id, stars, settled);
  marketplace::Rating r{rater, ratee.account, agreement_id, period_id, stars};
  persist({{"rating", rating_id(r), r.to_json()}, {"user", ratee.account}});
  after_mutation();
  return ratee;
}

// ---- persistence ----

Json Engine::resolve(const Ref& ref) const {
  if (!ref.record.is_null()) return ref.record;
  if (ref.type == "user") return market_->user(ref.id)->to_json();
  if (ref.type == "listing") return market_->listing(ref.id)->to_json();
  if (ref.type == "request") return market_->request(ref.id)->to_json();
  if (ref.type == "agreement") return book_->get(Hash256::from_hex(ref.id)).to_json();
  if (ref.type == "factory") {
    std::lock_guard lock(devices_mu_);
    return {{"provisioned", factory_.provisioned()}};
  }
  if (ref.type == "device") {
    auto id = DeviceId::from_hex(ref.id);
    std::lock_guard lock(devices_mu_);
    Json j = {{"device", meters_->find(id)->to_json()}, {"quote", quotes_.at(id).to_json()}};
    if (auto it = device_keys_.find(id); it != device_keys_.end()) j["key_seed"] = it->second.seed().hex();
    return j;
  }
  if (ref.type == "book") {
    Json balances = Json::array(), credits = Json::array();
    for (const auto& b : accounts_->balances()) balances.push_back(b.to_json());
    for (const auto& c : accounts_->pending_credits())
      if (c.amount_c != 0) credits.push_back({{"account", c.account}, {"amount_c", c.amount_c}});
    return {{"balances", balances}, {"credits", credits}};
  }
  throw std::logic_error("no resolver for record type " + ref.type);
}

void Engine::persist(const std::vector<Ref>& refs) {
  std::lock_guard lock(store_mu_);
  if (!store_) return;
  Json ops = Json::array();
  for (const auto& r : refs) ops.push_back({{"id", r.id}, {"record", resolve(r)}, {"type", r.type}});
  // One line per operation: a torn write loses the whole operation.
  store_->append({{"ops", ops}, {"seq", ++store_seq_}});
}

void Engine::restore() {
  const auto store_path = path_in(config_.data_dir, "store.jsonl");
  std::map<std::pair<std::string, std::string>, Json> latest;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& line : JsonlFile::load(store_path, true)) {
    store_seq_ = std::max<std::uint64_t>(store_seq_, line.value("seq", std::uint64_t{0}));
    for (const auto& op : require_field(line, "ops")) {
      auto key = std::make_pair(require_string(op, "type"), require_string(op, "id"));
      if (latest.count(key) == 0) order.push_back(key);
      latest[key] = require_field(op, "record");
    }
  }
  auto each = [&](const char* type, const auto& fn) {
    for (const auto& key : order)
      if (key.first == type) fn(latest.at(key));
  };

  std::vector<Json> market_records;
  each("user", [&](const Json& r) {
    market_records.push_back({{"record", r}, {"type", "user"}});
    ledger_->add_account(require_string(r, "account"));
  });
  ledger_->load_blocks(ledger::BlockLog::load(path_in(config_.data_dir, "ledger.jsonl"), true));

  each("factory", [&](const Json& r) { factory_.set_counter(r.at("provisioned").get<std::uint64_t>()); });
  each("device", [&](const Json& r) {
    auto device = metering::MeterDevice::from_json(require_field(r, "device"));
    meters_->restore_device(device, 0);
    quotes_[device.device_id] = metering::AttestationQuote::from_json(require_field(r, "quote"));
    if (r.contains("key_seed"))
      device_keys_.emplace(device.device_id,
                           crypto::SigningKey::from_seed(Hash256::from_hex(require_string(r, "key_seed"))));
  });
  each("reading", [&](const Json& r) { meters_->restore_reading(metering::MeterReading::from_json(r)); });
  for (const char* type : {"listing", "request", "rating"})
    each(type, [&](const Json& r) { market_records.push_back({{"record", r}, {"type", type}}); });
  market_->import_records(market_records);
  each("agreement", [&](const Json& r) { book_->restore(Agreement::from_json(r)); });
  each("invoice", [&](const Json& r) {
    auto p = posted_from(r);
    tracker_->restore(p);
    if (p.invoice.status == settlement::InvoiceStatus::Issued) in_flight_.insert({p.invoice.agreement_id, p.invoice.period_id});
  });
  each("book", [&](const Json& r) {
    for (const auto& b : r.at("balances"))
      accounts_->restore({require_string(b, "account"), require_int(b, "cash_c"), require_int(b, "tokens_mt")});
    for (const auto& c : r.at("credits")) accounts_->restore_credit({require_string(c, "account"), require_int(c, "amount_c")});
  });

  {
    std::lock_guard lock(store_mu_);
    store_.emplace(store_path);
  }
  // Invoices whose payments reached the chain before the crash resolve now.
  pump();
}

}  // namespace emarket::gateway

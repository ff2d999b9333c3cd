#include "emarket/settlement/settlement.hpp"

#include <algorithm>

#include "emarket/common/arith.hpp"

namespace emarket::settlement {

using agreements::AgreementState;
using agreements::DirectSaleTerms;
using agreements::LeaseRebateTerms;
using agreements::RentToOwnTerms;

const char* to_string(SettlementErrc code) {
  switch (code) {
    case SettlementErrc::NotActive: return "NotActive";
    case SettlementErrc::PeriodMismatch: return "PeriodMismatch";
    case SettlementErrc::MissingReading: return "MissingReading";
    case SettlementErrc::InsufficientTokens: return "InsufficientTokens";
    case SettlementErrc::InvalidPolicy: return "InvalidPolicy";
    case SettlementErrc::UnknownInvoice: return "UnknownInvoice";
  }
  return "Unknown";
}

const char* to_string(InvoiceStatus s) {
  switch (s) {
    case InvoiceStatus::Issued: return "Issued";
    case InvoiceStatus::Paid: return "Paid";
    case InvoiceStatus::Unpaid: return "Unpaid";
  }
  return "Issued";
}

void RewardPolicy::validate() const {
  auto bad = [](const std::string& why) { throw SettlementError(SettlementErrc::InvalidPolicy, why); };
  if (base_mt_per_mwh < 0) bad("base_mt_per_mwh must be non-negative");
  if (diversity_bonus_pct < 0) bad("diversity_bonus_pct must be non-negative");
  if (multiplier_cap_pct < 100) bad("multiplier_cap_pct must be at least 100");
  if (min_source_share_bp < 0 || min_source_share_bp > 10000) bad("min_source_share_bp must be within [0, 10000]");
}

Json RewardPolicy::to_json() const {
  return {{"base_mt_per_mwh", base_mt_per_mwh},
          {"diversity_bonus_pct", diversity_bonus_pct},
          {"min_source_share_bp", min_source_share_bp},
          {"multiplier_cap_pct", multiplier_cap_pct}};
}

RewardPolicy RewardPolicy::from_json(const Json& j) {
  RewardPolicy p;
  auto opt = [&](const char* key, std::int64_t& out) {
    if (j.contains(key)) out = require_int(j, key);
  };
  try {
    opt("base_mt_per_mwh", p.base_mt_per_mwh);
    opt("diversity_bonus_pct", p.diversity_bonus_pct);
    opt("multiplier_cap_pct", p.multiplier_cap_pct);
    opt("min_source_share_bp", p.min_source_share_bp);
  } catch (const std::invalid_argument& e) {
    throw SettlementError(SettlementErrc::InvalidPolicy, e.what());
  }
  p.validate();
  return p;
}

std::int64_t reward_multiplier_pct(const ReadingFields& reading, const RewardPolicy& policy) {
  const __int128 total = reading.total_generated();
  std::int64_t qualifying = 0;
  for (auto s : metering::kAllSources) {
    if (!metering::is_renewable(s)) continue;
    __int128 wh = reading.wh(s);
    if (wh > 0 && wh * 10000 >= total * policy.min_source_share_bp) ++qualifying;
  }
  std::int64_t pct = 100 + policy.diversity_bonus_pct * std::max<std::int64_t>(qualifying - 1, 0);
  return std::min(pct, policy.multiplier_cap_pct);
}

std::int64_t compute_reward(const ReadingFields& reading, const RewardPolicy& policy) {
  __int128 renewable = 0;
  for (auto s : metering::kAllSources)
    if (metering::is_renewable(s)) renewable += reading.wh(s);
  __int128 num = renewable * policy.base_mt_per_mwh * reward_multiplier_pct(reading, policy);
  return div_round_half_up(num, 100'000'000);
}

Json LineItem::to_json() const {
  return {{"amount_c", amount_c}, {"label", label}, {"payee", payee}, {"payer", payer}};
}

Json TokenAward::to_json() const { return {{"account", account}, {"amount_mt", amount_mt}}; }

Json Invoice::body_json() const {
  Json lines = Json::array();
  for (const auto& l : line_items) lines.push_back(l.to_json());
  Json awards = Json::array();
  for (const auto& a : token_awards) awards.push_back(a.to_json());
  return {{"agreement_id", agreement_id.hex()},
          {"line_items", lines},
          {"period_id", period_id},
          {"reading_hash", reading_hash.hex()},
          {"token_awards", awards}};
}

Json Invoice::to_json() const {
  Json j = body_json();
  j["invoice_id"] = invoice_id.hex();
  j["status"] = to_string(status);
  return j;
}

Invoice Invoice::from_json(const Json& j) {
  Invoice inv;
  inv.agreement_id = Hash256::from_hex(require_string(j, "agreement_id"));
  inv.period_id = static_cast<std::uint64_t>(require_int(j, "period_id"));
  inv.reading_hash = Hash256::from_hex(require_string(j, "reading_hash"));
  for (const auto& l : require_field(j, "line_items"))
    inv.line_items.push_back(
        {require_string(l, "label"), require_string(l, "payer"), require_string(l, "payee"), require_int(l, "amount_c")});
  for (const auto& a : require_field(j, "token_awards"))
    inv.token_awards.push_back({require_string(a, "account"), require_int(a, "amount_mt")});
  inv.invoice_id = canonical_hash(inv.body_json());
  if (j.contains("invoice_id") && Hash256::from_hex(require_string(j, "invoice_id")) != inv.invoice_id)
    throw std::invalid_argument("invoice_id does not match invoice body");
  auto status = j.value("status", std::string("Issued"));
  if (status == "Paid") inv.status = InvoiceStatus::Paid;
  else if (status == "Unpaid") inv.status = InvoiceStatus::Unpaid;
  else if (status != "Issued") throw std::invalid_argument("unknown invoice status '" + status + "'");
  return inv;
}

std::map<AccountId, std::int64_t> Invoice::deltas() const {
  std::map<AccountId, std::int64_t> d;
  for (const auto& l : line_items) {
    d[l.payer] -= l.amount_c;
    d[l.payee] += l.amount_c;
  }
  return d;
}

bool Invoice::involves(const AccountId& account) const {
  for (const auto& l : line_items)
    if (l.payer == account || l.payee == account) return true;
  return std::any_of(token_awards.begin(), token_awards.end(),
                     [&](const TokenAward& a) { return a.account == account; });
}

namespace {

// round(wh * c_per_kwh / 1000)
std::int64_t energy_cost(std::int64_t wh, std::int64_t c_per_kwh) {
  return div_round_half_up(static_cast<__int128>(wh) * c_per_kwh, 1000);
}

std::int64_t bp_of(std::int64_t amount, std::int64_t bp) {
  return div_round_half_up(static_cast<__int128>(amount) * bp, 10000);
}

}  // namespace

Invoice settle_period(const Agreement& agreement, const metering::MeterReading* reading, const RewardPolicy& policy,
                      const SettlementAccounts& accounts, const std::vector<EnergyCredit>& credits) {
  if (agreement.state != AgreementState::Active)
    throw SettlementError(SettlementErrc::NotActive,
                          std::string("agreement is ") + agreements::to_string(agreement.state));
  if (reading == nullptr)
    throw SettlementError(SettlementErrc::MissingReading,
                          "no accepted reading for period " + std::to_string(agreement.current_period()));
  if (static_cast<std::int64_t>(reading->period_id) != agreement.current_period())
    throw SettlementError(SettlementErrc::PeriodMismatch,
                          "reading is for period " + std::to_string(reading->period_id) + ", agreement is at period " +
                              std::to_string(agreement.current_period()));

  const auto& owner = agreement.parties.owner;
  const auto& consumer = agreement.parties.consumer;
  const auto& grid = agreement.parties.grid_operator;

  Invoice inv;
  inv.agreement_id = agreement.agreement_id;
  inv.period_id = reading->period_id;
  inv.reading_hash = reading->hash();
  auto line = [&](const char* label, const AccountId& payer, const AccountId& payee, std::int64_t amount) {
    inv.line_items.push_back({label, payer, payee, amount});
  };

  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, LeaseRebateTerms>) {
          auto energy = energy_cost(reading->consumed_wh, t.tariff_c_per_kwh);
          line("energy_charge", consumer, owner, energy);
          line("rebate", owner, consumer, bp_of(energy, t.rebate_bp));
          auto gross = energy_cost(reading->exported_wh, t.surplus_tariff_c_per_kwh);
          std::int64_t fee = 0;
          if (grid) {
            fee = bp_of(gross, t.grid_fee_bp);
            line("surplus_grid_fee", accounts.surplus_buyer, *grid, fee);
          }
          auto net = gross - fee;
          auto consumer_share = bp_of(net, t.surplus_split_bp);
          line("surplus_consumer_share", accounts.surplus_buyer, consumer, consumer_share);
          line("surplus_owner_share", accounts.surplus_buyer, owner, net - consumer_share);
        } else if constexpr (std::is_same_v<T, RentToOwnTerms>) {
          line("energy_charge", consumer, owner, energy_cost(reading->consumed_wh, t.tariff_c_per_kwh));
          line("installment", consumer, owner, t.installment_c);
        } else {
          auto delivered = std::min<__int128>(reading->exported_wh, static_cast<__int128>(t.max_kwh_per_period) * 1000);
          auto energy = energy_cost(static_cast<std::int64_t>(delivered), t.tariff_c_per_kwh);
          line("energy_charge", consumer, owner, energy);
          if (grid) line("grid_fee", consumer, *grid, bp_of(energy, t.grid_fee_bp));
        }
      },
      agreement.terms);

  std::map<AccountId, std::int64_t> credit_by_account;
  for (const auto& c : credits)
    if (c.amount_c > 0 && agreement.parties.names(c.account)) credit_by_account[c.account] += c.amount_c;
  for (const auto& [who, amount] : credit_by_account) line("energy_credit", accounts.treasury, who, amount);

  if (auto mt = compute_reward(*reading, policy); mt > 0) inv.token_awards.push_back({owner, mt});
  inv.invoice_id = canonical_hash(inv.body_json());
  return inv;
}

Json AccountBalance::to_json() const {
  return {{"account", account}, {"cash_c", cash_c}, {"tokens_mt", tokens_mt}};
}

std::optional<RedeemMode> parse_redeem_mode(std::string_view name) {
  if (name == "Cash") return RedeemMode::Cash;
  if (name == "EnergyCredit") return RedeemMode::EnergyCredit;
  return std::nullopt;
}

AccountBalance AccountBook::balance(const AccountId& account) const {
  std::lock_guard lock(mu_);
  auto it = balances_.find(account);
  return it == balances_.end() ? AccountBalance{account, 0, 0} : it->second;
}

std::vector<AccountBalance> AccountBook::balances() const {
  std::lock_guard lock(mu_);
  std::vector<AccountBalance> out;
  for (const auto& [id, b] : balances_) out.push_back(b);
  return out;
}

std::int64_t AccountBook::total_cash() const {
  std::lock_guard lock(mu_);
  std::int64_t sum = 0;
  for (const auto& [id, b] : balances_) sum += b.cash_c;
  return sum;
}

std::int64_t AccountBook::total_tokens() const {
  std::lock_guard lock(mu_);
  std::int64_t sum = 0;
  for (const auto& [id, b] : balances_) sum += b.tokens_mt;
  return sum;
}

void AccountBook::apply_paid(const Invoice& invoice) {
  std::lock_guard lock(mu_);
  auto at = [&](const AccountId& a) -> AccountBalance& {
    auto& b = balances_[a];
    b.account = a;
    return b;
  };
  for (const auto& [who, d] : invoice.deltas()) at(who).cash_c += d;
  for (const auto& a : invoice.token_awards) at(a.account).tokens_mt += a.amount_mt;
}

void AccountBook::credit_tokens(const AccountId& account, std::int64_t amount_mt) {
  std::lock_guard lock(mu_);
  auto& b = balances_[account];
  b.account = account;
  b.tokens_mt += amount_mt;
}

std::int64_t AccountBook::redeem_tokens(const AccountId& account, std::int64_t amount_mt, RedeemMode mode,
                                        std::int64_t rate_c_per_token) {
  if (amount_mt < 0 || rate_c_per_token < 0)
    throw std::invalid_argument("redemption amount and rate must be non-negative");
  std::lock_guard lock(mu_);
  auto it = balances_.find(account);
  std::int64_t held = it == balances_.end() ? 0 : it->second.tokens_mt;
  if (held < amount_mt)
    throw SettlementError(SettlementErrc::InsufficientTokens, "'" + account + "' holds " + std::to_string(held) +
                                                                  " mt, cannot redeem " + std::to_string(amount_mt));
  if (amount_mt == 0) return 0;
  auto cash = div_round_half_up(static_cast<__int128>(amount_mt) * rate_c_per_token, 1000);
  it->second.tokens_mt -= amount_mt;
  if (mode == RedeemMode::Cash) {
    it->second.cash_c += cash;
    auto& t = balances_[accounts_.treasury];
    t.account = accounts_.treasury;
    t.cash_c -= cash;
  } else if (cash > 0) {
    credits_[account] += cash;
  }
  return cash;
}

std::vector<EnergyCredit> AccountBook::take_credits(const std::vector<AccountId>& accounts) {
  std::lock_guard lock(mu_);
  std::vector<EnergyCredit> out;
  for (const auto& a : accounts) {
    auto it = credits_.find(a);
    if (it == credits_.end()) continue;
    out.push_back({a, it->second});
    credits_.erase(it);
  }
  return out;
}

void AccountBook::return_credits(const std::vector<EnergyCredit>& credits) {
  std::lock_guard lock(mu_);
  for (const auto& c : credits) credits_[c.account] += c.amount_c;
}

std::vector<EnergyCredit> AccountBook::pending_credits() const {
  std::lock_guard lock(mu_);
  std::vector<EnergyCredit> out;
  for (const auto& [a, c] : credits_) out.push_back({a, c});
  return out;
}

void AccountBook::restore(const AccountBalance& b) {
  std::lock_guard lock(mu_);
  balances_[b.account] = b;
}

void AccountBook::restore_credit(const EnergyCredit& c) {
  std::lock_guard lock(mu_);
  credits_[c.account] = c.amount_c;
}

SettlementTracker::SettlementTracker(ledger::LedgerPort& ledger, std::int64_t timeout_slots, AccountId token_issuer)
    : ledger_(ledger), timeout_(timeout_slots), token_issuer_(std::move(token_issuer)) {
  if (timeout_slots < 1) throw std::invalid_argument("confirmation timeout must be at least one slot");
}

PostedInvoice SettlementTracker::post(const Invoice& invoice, std::int64_t slot) {
  if (invoice.status != InvoiceStatus::Issued) throw std::invalid_argument("only Issued invoices can be posted");
  std::lock_guard lock(mu_);
  PostedInvoice p{invoice, {}, slot};
  auto id = invoice.invoice_id.hex();
  for (const auto& l : invoice.line_items) {
    Json payload = {{"amount_c", l.amount_c}, {"invoice_id", id}, {"label", l.label}, {"payee", l.payee},
                    {"payer", l.payer}};
    p.tx_ids.push_back(ledger_.submit(ledger::TxKind::Payment, std::move(payload), l.payer));
  }
  for (const auto& a : invoice.token_awards) {
    Json payload = {{"account", a.account}, {"amount_mt", a.amount_mt}, {"invoice_id", id}};
    p.tx_ids.push_back(ledger_.submit(ledger::TxKind::TokenIssue, std::move(payload), token_issuer_));
  }
  pending_.push_back(p);
  all_[invoice.invoice_id] = invoice;
  order_.push_back(invoice.invoice_id);
  return p;
}

Invoice SettlementTracker::refuse(Invoice invoice) {
  std::lock_guard lock(mu_);
  invoice.status = InvoiceStatus::Unpaid;
  if (all_.count(invoice.invoice_id) == 0) order_.push_back(invoice.invoice_id);
  all_[invoice.invoice_id] = invoice;
  return invoice;
}

std::vector<Invoice> SettlementTracker::poll(std::int64_t slot, const ConfirmedFn& confirmed) {
  std::lock_guard lock(mu_);
  std::vector<Invoice> resolved;
  std::vector<PostedInvoice> still;
  for (auto& p : pending_) {
    bool paid = std::all_of(p.tx_ids.begin(), p.tx_ids.end(), confirmed);
    if (paid) p.invoice.status = InvoiceStatus::Paid;
    else if (slot - p.posted_slot >= timeout_) p.invoice.status = InvoiceStatus::Unpaid;
    if (p.invoice.status == InvoiceStatus::Issued) {
      still.push_back(std::move(p));
      continue;
    }
    all_[p.invoice.invoice_id] = p.invoice;
    resolved.push_back(p.invoice);
  }
  pending_ = std::move(still);
  return resolved;
}

std::size_t SettlementTracker::outstanding() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

std::optional<Invoice> SettlementTracker::find(const Hash256& invoice_id) const {
  std::lock_guard lock(mu_);
  auto it = all_.find(invoice_id);
  if (it == all_.end()) return std::nullopt;
  return it->second;
}

std::vector<Invoice> SettlementTracker::invoices() const {
  std::lock_guard lock(mu_);
  std::vector<Invoice> out;
  for (const auto& id : order_) out.push_back(all_.at(id));
  return out;
}

void SettlementTracker::restore(const PostedInvoice& p) {
  std::lock_guard lock(mu_);
  if (all_.count(p.invoice.invoice_id) == 0) order_.push_back(p.invoice.invoice_id);
  all_[p.invoice.invoice_id] = p.invoice;
  if (p.invoice.status == InvoiceStatus::Issued) pending_.push_back(p);
}

std::vector<PostedInvoice> SettlementTracker::pending() const {
  std::lock_guard lock(mu_);
  return pending_;
}

}  // namespace emarket::settlement

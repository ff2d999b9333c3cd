#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "emarket/agreements/agreement.hpp"
#include "emarket/metering/reading.hpp"

namespace emarket::settlement {

using agreements::Agreement;
using metering::ReadingFields;

enum class SettlementErrc { NotActive, PeriodMismatch, MissingReading, InsufficientTokens, InvalidPolicy, UnknownInvoice };
const char* to_string(SettlementErrc code);

class SettlementError : public std::runtime_error {
 public:
  SettlementError(SettlementErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  SettlementErrc code() const { return code_; }

 private:
  SettlementErrc code_;
};

struct RewardPolicy {
  std::int64_t base_mt_per_mwh = 1000;
  std::int64_t diversity_bonus_pct = 10;
  std::int64_t multiplier_cap_pct = 150;
  std::int64_t min_source_share_bp = 1000;

  // Throws SettlementError{InvalidPolicy}.
  void validate() const;
  Json to_json() const;
  static RewardPolicy from_json(const Json& j);
  bool operator==(const RewardPolicy&) const = default;
};

// Incentive tokens for one reading, in milli-tokens.
std::int64_t compute_reward(const ReadingFields& reading, const RewardPolicy& policy);
// The diversity multiplier in percent, exposed for reporting and tests.
std::int64_t reward_multiplier_pct(const ReadingFields& reading, const RewardPolicy& policy);

struct LineItem {
  std::string label;
  AccountId payer;
  AccountId payee;
  std::int64_t amount_c = 0;

  Json to_json() const;
  bool operator==(const LineItem&) const = default;
};

struct TokenAward {
  AccountId account;
  std::int64_t amount_mt = 0;

  Json to_json() const;
  bool operator==(const TokenAward&) const = default;
};

enum class InvoiceStatus { Issued, Paid, Unpaid };
const char* to_string(InvoiceStatus s);

struct Invoice {
  Hash256 invoice_id;
  Hash256 agreement_id;
  std::uint64_t period_id = 0;
  Hash256 reading_hash;
  std::vector<LineItem> line_items;
  std::vector<TokenAward> token_awards;
  InvoiceStatus status = InvoiceStatus::Issued;

  // Everything except status; invoice_id is its hash.
  Json body_json() const;
  Json to_json() const;
  static Invoice from_json(const Json& j);

  // Signed cash movement per account implied by the line items.
  std::map<AccountId, std::int64_t> deltas() const;
  bool involves(const AccountId& account) const;
};

// Who is on the other side of exported surplus energy and of token
// redemptions. Both are ordinary accounts so every transfer stays balanced.
struct SettlementAccounts {
  AccountId surplus_buyer = "market";
  AccountId treasury = "treasury";
};

struct EnergyCredit {
  AccountId account;
  std::int64_t amount_c = 0;
};

// Pure: computes the invoice for the agreement's current period.
// Throws SettlementError{NotActive | PeriodMismatch | MissingReading}.
Invoice settle_period(const Agreement& agreement, const metering::MeterReading* reading, const RewardPolicy& policy,
                      const SettlementAccounts& accounts = {}, const std::vector<EnergyCredit>& credits = {});

struct AccountBalance {
  AccountId account;
  std::int64_t cash_c = 0;
  std::int64_t tokens_mt = 0;

  Json to_json() const;
};

enum class RedeemMode { Cash, EnergyCredit };
std::optional<RedeemMode> parse_redeem_mode(std::string_view name);

// Cash and token balances plus queued energy credits. Each mutation holds
// the book lock for the duration of one call.
class AccountBook {
 public:
  explicit AccountBook(SettlementAccounts accounts = {}) : accounts_(std::move(accounts)) {}

  AccountBalance balance(const AccountId& account) const;
  std::vector<AccountBalance> balances() const;
  std::int64_t total_cash() const;
  std::int64_t total_tokens() const;

  // Applies line-item deltas and token awards of a paid invoice.
  void apply_paid(const Invoice& invoice);
  void credit_tokens(const AccountId& account, std::int64_t amount_mt);

  // Throws SettlementError{InsufficientTokens}. Returns the cash amount moved
  // (Cash) or queued as credit (EnergyCredit).
  std::int64_t redeem_tokens(const AccountId& account, std::int64_t amount_mt, RedeemMode mode,
                             std::int64_t rate_c_per_token);

  // Takes all queued credits for the given accounts.
  std::vector<EnergyCredit> take_credits(const std::vector<AccountId>& accounts);
  void return_credits(const std::vector<EnergyCredit>& credits);
  std::vector<EnergyCredit> pending_credits() const;

  const SettlementAccounts& accounts() const { return accounts_; }
  void restore(const AccountBalance& b);
  void restore_credit(const EnergyCredit& c);

 private:
  mutable std::mutex mu_;
  SettlementAccounts accounts_;
  std::map<AccountId, AccountBalance> balances_;
  std::map<AccountId, std::int64_t> credits_;
};

// Confirmation lookup supplied by the ledger node.
using ConfirmedFn = std::function<bool(const Hash256& tx_id)>;

struct PostedInvoice {
  Invoice invoice;
  std::vector<Hash256> tx_ids;
  std::int64_t posted_slot = 0;
};

// Submits invoices to the ledger and resolves them to Paid once every
// transaction is on the canonical chain, or Unpaid after timeout_slots
// block slots without full confirmation.
class SettlementTracker {
 public:
  SettlementTracker(ledger::LedgerPort& ledger, std::int64_t timeout_slots = 10,
                    AccountId token_issuer = "treasury");

  // Throws LedgerError{LedgerUnavailable}; on failure nothing is tracked.
  PostedInvoice post(const Invoice& invoice, std::int64_t slot);
  // Records an invoice the payer refused; it is Unpaid without touching the ledger.
  Invoice refuse(Invoice invoice);
  // Resolves whatever can be resolved at this slot, in posting order.
  std::vector<Invoice> poll(std::int64_t slot, const ConfirmedFn& confirmed);

  std::size_t outstanding() const;
  std::optional<Invoice> find(const Hash256& invoice_id) const;
  std::vector<Invoice> invoices() const;
  std::int64_t timeout_slots() const { return timeout_; }

  void restore(const PostedInvoice& p);
  std::vector<PostedInvoice> pending() const;

 private:
  mutable std::mutex mu_;
  ledger::LedgerPort& ledger_;
  std::int64_t timeout_;
  AccountId token_issuer_;
  std::vector<PostedInvoice> pending_;
  std::map<Hash256, Invoice> all_;
  std::vector<Hash256> order_;
};

}  // namespace emarket::settlement

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "emarket/ledger/keys.hpp"
#include "emarket/ledger/local_ledger.hpp"

namespace emarket::agreements {

enum class AgreementKind { LeaseRebate, RentToOwn, DirectSale };
enum class AgreementState { Draft, PendingSignatures, Active, Completed, Breached, Terminated };

const char* to_string(AgreementKind k);
const char* to_string(AgreementState s);
std::optional<AgreementKind> parse_agreement_kind(std::string_view name);
std::optional<AgreementState> parse_agreement_state(std::string_view name);

enum class AgreementErrc {
  InvalidTerms,
  DuplicateParties,
  UnknownParty,
  BadSignature,
  AlreadyActive,
  NotActive,
  MissingCounterSignature,
  UnknownAgreement,
  DuplicateAgreement,
};
const char* to_string(AgreementErrc code);

class AgreementError : public std::runtime_error {
 public:
  AgreementError(AgreementErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  AgreementErrc code() const { return code_; }

 private:
  AgreementErrc code_;
};

// Money in integer cents, fractions in basis points.
struct LeaseRebateTerms {
  std::int64_t tariff_c_per_kwh = 0;
  std::int64_t rebate_bp = 0;
  std::int64_t surplus_split_bp = 0;
  std::int64_t surplus_tariff_c_per_kwh = 0;
  std::int64_t grid_fee_bp = 0;
  std::int64_t term_periods = 144;

  bool operator==(const LeaseRebateTerms&) const = default;
};

struct RentToOwnTerms {
  std::int64_t tariff_c_per_kwh = 0;
  std::int64_t installment_c = 0;
  std::int64_t term_periods = 144;
  bool ownership_transferred = false;

  bool operator==(const RentToOwnTerms&) const = default;
};

struct DirectSaleTerms {
  std::int64_t tariff_c_per_kwh = 0;
  std::int64_t max_kwh_per_period = 0;
  std::int64_t grid_fee_bp = 0;
  std::int64_t term_periods = 12;

  bool operator==(const DirectSaleTerms&) const = default;
};

using Terms = std::variant<LeaseRebateTerms, RentToOwnTerms, DirectSaleTerms>;

AgreementKind kind_of(const Terms& t);
std::int64_t term_periods(const Terms& t);
// Terms as agreed at proposal time (ownership_transferred excluded).
Json terms_to_json(const Terms& t);
Terms terms_from_json(AgreementKind kind, const Json& j);

struct Parties {
  AccountId owner;
  AccountId consumer;
  std::optional<AccountId> grid_operator;

  std::vector<AccountId> named() const;
  bool names(const AccountId& who) const;
  bool operator==(const Parties&) const = default;
};

struct Agreement {
  Hash256 agreement_id;
  Parties parties;
  Terms terms;
  std::string premises_id;
  std::string reference;  // listing/request that produced it, may be empty
  std::int64_t start_period = 1;

  AgreementState state = AgreementState::Draft;
  std::map<AccountId, Signature> signatures;
  std::int64_t periods_elapsed = 0;
  std::optional<Hash256> breach_invoice;
  std::optional<std::int64_t> terminated_at;

  AgreementKind kind() const { return kind_of(terms); }
  std::int64_t term_length() const { return term_periods(terms); }
  bool ownership_transferred() const;
  // The period the next invoice settles.
  std::int64_t current_period() const { return start_period + periods_elapsed; }
  bool is_final() const;

  // What agreement_id hashes.
  Json proposal_json() const;
  Json to_json() const;
  static Agreement from_json(const Json& j);
};

// Throws AgreementError{InvalidTerms} when terms break their invariants.
void validate_terms(const Terms& terms, const Parties& parties);

// Validates terms and parties and returns a Draft with its id filled in.
// Throws AgreementError{InvalidTerms | DuplicateParties}.
Agreement propose_agreement(Parties parties, Terms terms, std::string premises_id,
                            std::int64_t start_period = 1, std::string reference = {});

enum class PeriodResult { Paid, Unpaid };

struct TerminationNotice {
  std::int64_t at_period = 0;
  std::map<AccountId, Signature> signatures;
};

// Bytes a principal signs to agree to an early exit.
Json termination_message(const Hash256& agreement_id, std::int64_t at_period);
Signature sign_termination(const crypto::SigningKey& key, const Hash256& agreement_id, std::int64_t at_period);

// State transitions. Each transition into Active, Completed, Breached or
// Terminated submits exactly one AgreementRecord before the state changes,
// so a failed submit leaves the agreement untouched.
void sign(Agreement& a, const AccountId& party, const Signature& sig, const ledger::KeyDirectory& keys,
          ledger::LedgerPort& ledger, const AccountId& committer);
void advance_period(Agreement& a, PeriodResult result, const std::optional<Hash256>& invoice_id,
                    ledger::LedgerPort& ledger, const AccountId& committer);
void terminate(Agreement& a, const TerminationNotice& notice, const ledger::KeyDirectory& keys,
               ledger::LedgerPort& ledger, const AccountId& committer);

// Agreements by id, each mutated under its own lock.
class AgreementBook {
 public:
  AgreementBook(std::shared_ptr<const ledger::KeyDirectory> keys, ledger::LedgerPort& ledger,
                AccountId committer = "operator");

  // Throws AgreementError{DuplicateAgreement}.
  Agreement add(Agreement a);
  Agreement get(const Hash256& id) const;
  std::optional<Agreement> find(const Hash256& id) const;
  std::vector<Agreement> list() const;
  // Active agreement bound to the premises, if any.
  std::optional<Agreement> active_for_premises(const std::string& premises_id) const;

  Agreement sign(const Hash256& id, const AccountId& party, const Signature& sig);
  Agreement advance_period(const Hash256& id, PeriodResult result, const std::optional<Hash256>& invoice_id);
  Agreement terminate(const Hash256& id, const TerminationNotice& notice);

  // Restore path: insert or replace without touching the ledger.
  void restore(const Agreement& a);

 private:
  struct Slot {
    std::mutex mu;
    Agreement agreement;
  };
  std::shared_ptr<Slot> slot(const Hash256& id) const;

  std::shared_ptr<const ledger::KeyDirectory> keys_;
  ledger::LedgerPort& ledger_;
  AccountId committer_;
  mutable std::shared_mutex mu_;
  std::map<Hash256, std::shared_ptr<Slot>> slots_;
};

}  // namespace emarket::agreements

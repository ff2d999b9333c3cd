#include "emarket/agreements/agreement.hpp"

#include <algorithm>
#include <array>

namespace emarket::agreements {

namespace {

constexpr std::array<const char*, 3> kKindNames{"LeaseRebate", "RentToOwn", "DirectSale"};
constexpr std::array<const char*, 6> kStateNames{"Draft",     "PendingSignatures", "Active",
                                                 "Completed", "Breached",          "Terminated"};

[[noreturn]] void invalid(const std::string& why) { throw AgreementError(AgreementErrc::InvalidTerms, why); }

void require_bp(std::int64_t v, const char* name) {
  if (v < 0 || v > 10000) invalid(std::string(name) + " must be within [0, 10000]");
}

void require_non_negative(std::int64_t v, const char* name) {
  if (v < 0) invalid(std::string(name) + " must be non-negative");
}

void record(ledger::LedgerPort& ledger, const AccountId& committer, const Agreement& a, const char* event,
            Json extra = Json::object()) {
  Json payload = {{"agreement_id", a.agreement_id.hex()}, {"event", event}, {"period", a.current_period()}};
  for (auto& [k, v] : extra.items()) payload[k] = v;
  ledger.submit(ledger::TxKind::AgreementRecord, std::move(payload), committer);
}

bool signature_ok(const ledger::KeyDirectory& keys, const AccountId& who, std::span<const std::uint8_t> msg,
                  const Signature& sig) {
  auto pk = keys.find(who);
  return pk && crypto::verify(*pk, msg, sig);
}

}  // namespace

const char* to_string(AgreementKind k) { return kKindNames[static_cast<std::size_t>(k)]; }
const char* to_string(AgreementState s) { return kStateNames[static_cast<std::size_t>(s)]; }

std::optional<AgreementKind> parse_agreement_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (name == kKindNames[i]) return static_cast<AgreementKind>(i);
  return std::nullopt;
}

std::optional<AgreementState> parse_agreement_state(std::string_view name) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i)
    if (name == kStateNames[i]) return static_cast<AgreementState>(i);
  return std::nullopt;
}

const char* to_string(AgreementErrc code) {
  switch (code) {
    case AgreementErrc::InvalidTerms: return "InvalidTerms";
    case AgreementErrc::DuplicateParties: return "DuplicateParties";
    case AgreementErrc::UnknownParty: return "UnknownParty";
    case AgreementErrc::BadSignature: return "BadSignature";
    case AgreementErrc::AlreadyActive: return "AlreadyActive";
    case AgreementErrc::NotActive: return "NotActive";
    case AgreementErrc::MissingCounterSignature: return "MissingCounterSignature";
    case AgreementErrc::UnknownAgreement: return "UnknownAgreement";
    case AgreementErrc::DuplicateAgreement: return "DuplicateAgreement";
  }
  return "Unknown";
}

void validate_terms(const Terms& terms, const Parties& parties) {
  auto check_grid = [&](std::int64_t grid_fee_bp) {
    require_bp(grid_fee_bp, "grid_fee_bp");
    if (grid_fee_bp > 0 && !parties.grid_operator) invalid("grid_fee_bp > 0 requires a grid_operator");
  };
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        require_non_negative(t.tariff_c_per_kwh, "tariff_c_per_kwh");
        if (t.term_periods < 1) invalid("term_periods must be at least 1");
        if constexpr (std::is_same_v<T, LeaseRebateTerms>) {
          require_bp(t.rebate_bp, "rebate_bp");
          require_bp(t.surplus_split_bp, "surplus_split_bp");
          require_non_negative(t.surplus_tariff_c_per_kwh, "surplus_tariff_c_per_kwh");
          check_grid(t.grid_fee_bp);
        } else if constexpr (std::is_same_v<T, RentToOwnTerms>) {
          require_non_negative(t.installment_c, "installment_c");
          if (t.ownership_transferred) invalid("a new rent-to-own agreement cannot start transferred");
        } else {
          require_non_negative(t.max_kwh_per_period, "max_kwh_per_period");
          check_grid(t.grid_fee_bp);
        }
      },
      terms);
}

AgreementKind kind_of(const Terms& t) { return static_cast<AgreementKind>(t.index()); }

std::int64_t term_periods(const Terms& t) {
  return std::visit([](const auto& x) { return x.term_periods; }, t);
}

Json terms_to_json(const Terms& t) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, LeaseRebateTerms>) {
          return {{"grid_fee_bp", x.grid_fee_bp},
                  {"rebate_bp", x.rebate_bp},
                  {"surplus_split_bp", x.surplus_split_bp},
                  {"surplus_tariff_c_per_kwh", x.surplus_tariff_c_per_kwh},
                  {"tariff_c_per_kwh", x.tariff_c_per_kwh},
                  {"term_periods", x.term_periods}};
        } else if constexpr (std::is_same_v<T, RentToOwnTerms>) {
          return {{"installment_c", x.installment_c},
                  {"tariff_c_per_kwh", x.tariff_c_per_kwh},
                  {"term_periods", x.term_periods}};
        } else {
          return {{"grid_fee_bp", x.grid_fee_bp},
                  {"max_kwh_per_period", x.max_kwh_per_period},
                  {"tariff_c_per_kwh", x.tariff_c_per_kwh},
                  {"term_periods", x.term_periods}};
        }
      },
      t);
}

Terms terms_from_json(AgreementKind kind, const Json& j) {
  auto opt = [&](const char* key, std::int64_t dflt) { return j.contains(key) ? require_int(j, key) : dflt; };
  try {
    switch (kind) {
      case AgreementKind::LeaseRebate: {
        LeaseRebateTerms t;
        t.tariff_c_per_kwh = require_int(j, "tariff_c_per_kwh");
        t.rebate_bp = require_int(j, "rebate_bp");
        t.surplus_split_bp = opt("surplus_split_bp", 0);
        t.surplus_tariff_c_per_kwh = opt("surplus_tariff_c_per_kwh", 0);
        t.grid_fee_bp = opt("grid_fee_bp", 0);
        t.term_periods = opt("term_periods", t.term_periods);
        return t;
      }
      case AgreementKind::RentToOwn: {
        RentToOwnTerms t;
        t.tariff_c_per_kwh = require_int(j, "tariff_c_per_kwh");
        t.installment_c = require_int(j, "installment_c");
        t.term_periods = opt("term_periods", t.term_periods);
        return t;
      }
      case AgreementKind::DirectSale: {
        DirectSaleTerms t;
        t.tariff_c_per_kwh = require_int(j, "tariff_c_per_kwh");
        t.max_kwh_per_period = require_int(j, "max_kwh_per_period");
        t.grid_fee_bp = opt("grid_fee_bp", 0);
        t.term_periods = opt("term_periods", t.term_periods);
        return t;
      }
    }
  } catch (const std::invalid_argument& e) {
    invalid(e.what());
  }
  invalid("unknown agreement kind");
}

std::vector<AccountId> Parties::named() const {
  std::vector<AccountId> out{owner, consumer};
  if (grid_operator) out.push_back(*grid_operator);
  return out;
}

bool Parties::names(const AccountId& who) const {
  return who == owner || who == consumer || (grid_operator && who == *grid_operator);
}

bool Agreement::ownership_transferred() const {
  auto* r = std::get_if<RentToOwnTerms>(&terms);
  return r != nullptr && r->ownership_transferred;
}

bool Agreement::is_final() const {
  return state == AgreementState::Completed || state == AgreementState::Breached ||
         state == AgreementState::Terminated;
}

Json Agreement::proposal_json() const {
  Json j = {{"consumer", parties.consumer},
            {"kind", to_string(kind())},
            {"owner", parties.owner},
            {"premises_id", premises_id},
            {"reference", reference},
            {"start_period", start_period},
            {"terms", terms_to_json(terms)}};
  if (parties.grid_operator) j["grid_operator"] = *parties.grid_operator;
  return j;
}

Json Agreement::to_json() const {
  Json j = proposal_json();
  j["agreement_id"] = agreement_id.hex();
  j["state"] = to_string(state);
  j["periods_elapsed"] = periods_elapsed;
  j["ownership_transferred"] = ownership_transferred();
  Json sigs = Json::object();
  for (const auto& [who, s] : signatures) sigs[who] = s.hex();
  j["signatures"] = sigs;
  if (breach_invoice) j["breach_invoice"] = breach_invoice->hex();
  if (terminated_at) j["terminated_at"] = *terminated_at;
  return j;
}

Agreement Agreement::from_json(const Json& j) {
  auto kind = parse_agreement_kind(require_string(j, "kind"));
  if (!kind) invalid("unknown agreement kind");
  Agreement a;
  a.parties.owner = require_string(j, "owner");
  a.parties.consumer = require_string(j, "consumer");
  if (j.contains("grid_operator")) a.parties.grid_operator = require_string(j, "grid_operator");
  a.terms = terms_from_json(*kind, require_field(j, "terms"));
  a.premises_id = require_string(j, "premises_id");
  a.reference = j.contains("reference") ? require_string(j, "reference") : "";
  a.start_period = require_int(j, "start_period");
  a.agreement_id = canonical_hash(a.proposal_json());
  if (j.contains("agreement_id") && Hash256::from_hex(require_string(j, "agreement_id")) != a.agreement_id)
    invalid("agreement_id does not match its terms");
  if (j.contains("state")) {
    auto st = parse_agreement_state(require_string(j, "state"));
    if (!st) invalid("unknown agreement state");
    a.state = *st;
  }
  if (j.contains("periods_elapsed")) a.periods_elapsed = require_int(j, "periods_elapsed");
  if (auto* r = std::get_if<RentToOwnTerms>(&a.terms)) r->ownership_transferred = j.value("ownership_transferred", false);
  if (j.contains("signatures"))
    for (const auto& [who, s] : j.at("signatures").items()) a.signatures[who] = Signature::from_hex(s.get<std::string>());
  if (j.contains("breach_invoice")) a.breach_invoice = Hash256::from_hex(require_string(j, "breach_invoice"));
  if (j.contains("terminated_at")) a.terminated_at = require_int(j, "terminated_at");
  return a;
}

Agreement propose_agreement(Parties parties, Terms terms, std::string premises_id, std::int64_t start_period,
                            std::string reference) {
  if (parties.owner.empty() || parties.consumer.empty() || (parties.grid_operator && parties.grid_operator->empty()))
    invalid("party account ids must be non-empty");
  if (parties.owner == parties.consumer ||
      (parties.grid_operator && (*parties.grid_operator == parties.owner || *parties.grid_operator == parties.consumer)))
    throw AgreementError(AgreementErrc::DuplicateParties, "agreement parties must be distinct accounts");
  if (premises_id.empty()) invalid("premises_id must be non-empty");
  if (start_period < 1) invalid("start_period must be at least 1");
  validate_terms(terms, parties);

  Agreement a;
  a.parties = std::move(parties);
  a.terms = std::move(terms);
  a.premises_id = std::move(premises_id);
  a.reference = std::move(reference);
  a.start_period = start_period;
  a.agreement_id = canonical_hash(a.proposal_json());
  return a;
}

Json termination_message(const Hash256& agreement_id, std::int64_t at_period) {
  return {{"action", "terminate"}, {"agreement_id", agreement_id.hex()}, {"at_period", at_period}};
}

Signature sign_termination(const crypto::SigningKey& key, const Hash256& agreement_id, std::int64_t at_period) {
  return key.sign(as_bytes(canonical_dump(termination_message(agreement_id, at_period))));
}

void sign(Agreement& a, const AccountId& party, const Signature& sig, const ledger::KeyDirectory& keys,
          ledger::LedgerPort& ledger, const AccountId& committer) {
  if (a.state != AgreementState::Draft && a.state != AgreementState::PendingSignatures)
    throw AgreementError(AgreementErrc::AlreadyActive,
                         std::string("agreement is already ") + to_string(a.state));
  if (!a.parties.names(party))
    throw AgreementError(AgreementErrc::UnknownParty, "'" + party + "' is not a party to this agreement");
  if (!signature_ok(keys, party, a.agreement_id.span(), sig))
    throw AgreementError(AgreementErrc::BadSignature, "signature by '" + party + "' does not verify");

  bool quorum = true;
  for (const auto& who : a.parties.named())
    if (who != party && a.signatures.count(who) == 0) quorum = false;
  if (quorum) record(ledger, committer, a, "activated", {{"terms", a.proposal_json()}});
  a.signatures[party] = sig;
  a.state = quorum ? AgreementState::Active : AgreementState::PendingSignatures;
}

void advance_period(Agreement& a, PeriodResult result, const std::optional<Hash256>& invoice_id,
                    ledger::LedgerPort& ledger, const AccountId& committer) {
  if (a.state != AgreementState::Active)
    throw AgreementError(AgreementErrc::NotActive, std::string("agreement is ") + to_string(a.state));
  if (result == PeriodResult::Unpaid) {
    record(ledger, committer, a, "breached", {{"invoice_id", invoice_id ? Json(invoice_id->hex()) : Json(nullptr)}});
    a.state = AgreementState::Breached;
    a.breach_invoice = invoice_id;
    return;
  }
  if (a.periods_elapsed + 1 < a.term_length()) {
    ++a.periods_elapsed;
    return;
  }
  Json extra = {{"invoice_id", invoice_id ? Json(invoice_id->hex()) : Json(nullptr)}};
  if (a.kind() == AgreementKind::RentToOwn) extra["ownership_transferred"] = true;
  record(ledger, committer, a, "completed", std::move(extra));
  ++a.periods_elapsed;
  if (auto* r = std::get_if<RentToOwnTerms>(&a.terms)) r->ownership_transferred = true;
  a.state = AgreementState::Completed;
}

void terminate(Agreement& a, const TerminationNotice& notice, const ledger::KeyDirectory& keys,
               ledger::LedgerPort& ledger, const AccountId& committer) {
  if (a.state != AgreementState::Active)
    throw AgreementError(AgreementErrc::NotActive, std::string("agreement is ") + to_string(a.state));
  auto msg = canonical_dump(termination_message(a.agreement_id, notice.at_period));
  for (const auto& who : {a.parties.owner, a.parties.consumer}) {
    auto it = notice.signatures.find(who);
    if (it == notice.signatures.end())
      throw AgreementError(AgreementErrc::MissingCounterSignature, "termination lacks a signature from '" + who + "'");
    if (!signature_ok(keys, who, as_bytes(msg), it->second))
      throw AgreementError(AgreementErrc::BadSignature, "termination signature by '" + who + "' does not verify");
  }
  record(ledger, committer, a, "terminated", {{"at_period", notice.at_period}});
  a.state = AgreementState::Terminated;
  a.terminated_at = notice.at_period;
}

AgreementBook::AgreementBook(std::shared_ptr<const ledger::KeyDirectory> keys, ledger::LedgerPort& ledger,
                             AccountId committer)
    : keys_(std::move(keys)), ledger_(ledger), committer_(std::move(committer)) {}

std::shared_ptr<AgreementBook::Slot> AgreementBook::slot(const Hash256& id) const {
  std::shared_lock lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) throw AgreementError(AgreementErrc::UnknownAgreement, "no agreement " + id.hex());
  return it->second;
}

Agreement AgreementBook::add(Agreement a) {
  std::unique_lock lock(mu_);
  if (slots_.count(a.agreement_id) != 0)
    throw AgreementError(AgreementErrc::DuplicateAgreement, "agreement " + a.agreement_id.hex() + " already exists");
  auto s = std::make_shared<Slot>();
  s->agreement = a;
  slots_.emplace(a.agreement_id, std::move(s));
  return a;
}

Agreement AgreementBook::get(const Hash256& id) const {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  return s->agreement;
}

std::optional<Agreement> AgreementBook::find(const Hash256& id) const {
  try {
    return get(id);
  } catch (const AgreementError&) {
    return std::nullopt;
  }
}

std::vector<Agreement> AgreementBook::list() const {
  std::vector<std::shared_ptr<Slot>> all;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, s] : slots_) all.push_back(s);
  }
  std::vector<Agreement> out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    out.push_back(s->agreement);
  }
  return out;
}

std::optional<Agreement> AgreementBook::active_for_premises(const std::string& premises_id) const {
  for (auto& a : list())
    if (a.state == AgreementState::Active && a.premises_id == premises_id) return a;
  return std::nullopt;
}

Agreement AgreementBook::sign(const Hash256& id, const AccountId& party, const Signature& sig) {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  agreements::sign(s->agreement, party, sig, *keys_, ledger_, committer_);
  return s->agreement;
}

Agreement AgreementBook::advance_period(const Hash256& id, PeriodResult result,
                                        const std::optional<Hash256>& invoice_id) {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  agreements::advance_period(s->agreement, result, invoice_id, ledger_, committer_);
  return s->agreement;
}

Agreement AgreementBook::terminate(const Hash256& id, const TerminationNotice& notice) {
  auto s = slot(id);
  std::lock_guard lock(s->mu);
  agreements::terminate(s->agreement, notice, *keys_, ledger_, committer_);
  return s->agreement;
}

void AgreementBook::restore(const Agreement& a) {
  std::unique_lock lock(mu_);
  auto& s = slots_[a.agreement_id];
  if (!s) s = std::make_shared<Slot>();
  std::lock_guard inner(s->mu);
  s->agreement = a;
}

}  // namespace emarket::agreements

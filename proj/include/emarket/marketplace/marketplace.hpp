#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "emarket/agreements/agreement.hpp"
#include "emarket/metering/reading.hpp"

namespace emarket::marketplace {

using agreements::Agreement;
using metering::Source;

enum class Role { Owner, Prosumer, Consumer, GridOperator };
const char* to_string(Role r);
std::optional<Role> parse_role(std::string_view name);

enum class MarketErrc {
  InvalidFields,
  WrongRole,
  NotOpen,
  RaceLost,
  NotCounterparty,
  DuplicateRating,
  PeriodNotSettled,
  StarsOutOfRange,
  UnknownUser,
  UnknownListing,
  UnknownRequest,
  DuplicateUser,
};
const char* to_string(MarketErrc code);

class MarketError : public std::runtime_error {
 public:
  MarketError(MarketErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  MarketErrc code() const { return code_; }

 private:
  MarketErrc code_;
};

struct UserProfile {
  AccountId account;
  std::set<Role> roles;
  std::string location;
  std::int64_t rating_sum = 0;
  std::int64_t rating_count = 0;

  bool has(Role r) const { return roles.count(r) != 0; }
  // floor(10 * average); 0 when unrated.
  std::int64_t average_x10() const { return rating_count == 0 ? 0 : rating_sum * 10 / rating_count; }
  Json to_json() const;
  static UserProfile from_json(const Json& j);
};

enum class RecordStatus { Open, Matched, Withdrawn };
const char* to_string(RecordStatus s);

struct Listing {
  std::string listing_id;
  AccountId owner;
  std::set<Source> system_type;
  std::int64_t capacity_w = 0;
  std::int64_t capital_c = 0;
  std::string location;
  agreements::Terms preferred_terms;
  std::optional<AccountId> grid_operator;
  RecordStatus status = RecordStatus::Open;

  Json to_json() const;
  static Listing from_json(const Json& j);
};

struct Request {
  std::string request_id;
  AccountId consumer;
  std::int64_t premises_area_m2 = 0;
  std::string location;
  std::set<Source> source_preference;  // empty = any
  std::string premises_id;
  RecordStatus status = RecordStatus::Open;

  Json to_json() const;
  static Request from_json(const Json& j);
};

struct Rating {
  AccountId rater;
  AccountId ratee;
  Hash256 agreement_id;
  std::int64_t period_id = 0;
  std::int64_t stars = 0;

  Json to_json() const;
  static Rating from_json(const Json& j);
};

struct MatchProposal {
  std::string listing_id;
  std::string request_id;
  std::int64_t score = 0;

  Json to_json() const;
};

std::int64_t match_score(const Listing& l, const Request& r, const UserProfile& owner);

// Off-chain marketplace records with a ledger commitment per record.
// Reads take a shared lock; each mutation holds the exclusive lock, which is
// also what makes accept_match a compare-and-set with a single winner.
class Marketplace {
 public:
  explicit Marketplace(ledger::LedgerPort& ledger, AccountId committer = "operator");

  UserProfile register_user(UserProfile profile);
  std::optional<UserProfile> user(const AccountId& account) const;
  std::vector<UserProfile> users() const;

  // Ids are assigned here; status is forced to Open.
  Listing post_listing(Listing fields);
  Request post_request(Request fields);
  Listing withdraw_listing(const std::string& listing_id, const AccountId& by);
  Request withdraw_request(const std::string& request_id, const AccountId& by);

  std::optional<Listing> listing(const std::string& id) const;
  std::optional<Request> request(const std::string& id) const;
  // Open listings, optionally filtered, ordered by listing_id.
  std::vector<Listing> search_listings(const std::optional<std::string>& region,
                                       const std::optional<Source>& source) const;
  // Open listings scored against an Open request, (score desc, listing_id asc).
  std::vector<MatchProposal> matches(const std::string& request_id) const;

  // Marks both records Matched and returns the Draft agreement built from the
  // listing's preferred terms. Throws MarketError{NotOpen | RaceLost} or
  // AgreementError from the proposal.
  Agreement accept_match(const std::string& listing_id, const std::string& request_id, std::int64_t start_period = 1);

  // rater must be owner or consumer of the agreement; the ratee is the other.
  UserProfile rate(const AccountId& rater, const Agreement& agreement, std::int64_t period_id, std::int64_t stars,
                   bool period_settled);
  std::vector<Rating> ratings() const;

  // Every record as canonical JSON lines ({"type": ..., "record": ...}).
  std::vector<Json> export_records() const;
  void import_records(const std::vector<Json>& records);

 private:
  Hash256 commit(const char* type, const Json& record);

  mutable std::shared_mutex mu_;
  ledger::LedgerPort& ledger_;
  AccountId committer_;
  std::map<AccountId, UserProfile> users_;
  std::map<std::string, Listing> listings_;
  std::map<std::string, Request> requests_;
  std::vector<Rating> ratings_;
  std::set<std::tuple<AccountId, Hash256, std::int64_t>> rated_;
  std::uint64_t next_listing_ = 1;
  std::uint64_t next_request_ = 1;
};

}  // namespace emarket::marketplace

#include "emarket/marketplace/marketplace.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>

namespace emarket::marketplace {

namespace {

[[noreturn]] void fail(MarketErrc code, const std::string& what) { throw MarketError(code, what); }

std::string make_id(char prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

std::uint64_t id_number(const std::string& id) { return id.size() > 1 ? std::stoull(id.substr(1)) : 0; }

Json sources_json(const std::set<Source>& s) {
  Json out = Json::array();
  for (auto src : s) out.push_back(metering::to_string(src));
  return out;
}

std::set<Source> sources_from(const Json& j, const char* key) {
  std::set<Source> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) fail(MarketErrc::InvalidFields, std::string(key) + " must be an array of source labels");
  for (const auto& v : arr) {
    auto s = v.is_string() ? metering::parse_source(v.get<std::string>()) : std::nullopt;
    if (!s) fail(MarketErrc::InvalidFields, "unknown energy source " + v.dump());
    out.insert(*s);
  }
  return out;
}

RecordStatus parse_status(const std::string& s) {
  if (s == "Open") return RecordStatus::Open;
  if (s == "Matched") return RecordStatus::Matched;
  if (s == "Withdrawn") return RecordStatus::Withdrawn;
  fail(MarketErrc::InvalidFields, "unknown status '" + s + "'");
}

template <class F>
auto fields(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    fail(MarketErrc::InvalidFields, e.what());
  } catch (const agreements::AgreementError& e) {
    fail(MarketErrc::InvalidFields, e.what());
  }
}

}  // namespace

const char* to_string(Role r) {
  switch (r) {
    case Role::Owner: return "Owner";
    case Role::Prosumer: return "Prosumer";
    case Role::Consumer: return "Consumer";
    case Role::GridOperator: return "GridOperator";
  }
  return "Owner";
}

std::optional<Role> parse_role(std::string_view name) {
  for (auto r : {Role::Owner, Role::Prosumer, Role::Consumer, Role::GridOperator})
    if (name == to_string(r)) return r;
  return std::nullopt;
}

const char* to_string(MarketErrc code) {
  switch (code) {
    case MarketErrc::InvalidFields: return "InvalidFields";
    case MarketErrc::WrongRole: return "WrongRole";
    case MarketErrc::NotOpen: return "NotOpen";
    case MarketErrc::RaceLost: return "RaceLost";
    case MarketErrc::NotCounterparty: return "NotCounterparty";
    case MarketErrc::DuplicateRating: return "DuplicateRating";
    case MarketErrc::PeriodNotSettled: return "PeriodNotSettled";
    case MarketErrc::StarsOutOfRange: return "StarsOutOfRange";
    case MarketErrc::UnknownUser: return "UnknownUser";
    case MarketErrc::UnknownListing: return "UnknownListing";
    case MarketErrc::UnknownRequest: return "UnknownRequest";
    case MarketErrc::DuplicateUser: return "DuplicateUser";
  }
  return "Unknown";
}

const char* to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::Open: return "Open";
    case RecordStatus::Matched: return "Matched";
    case RecordStatus::Withdrawn: return "Withdrawn";
  }
  return "Open";
}

Json UserProfile::to_json() const {
  Json roles_json = Json::array();
  for (auto r : roles) roles_json.push_back(to_string(r));
  return {{"account", account},   {"location", location},         {"rating_count", rating_count},
          {"rating_sum", rating_sum}, {"roles", roles_json}};
}

UserProfile UserProfile::from_json(const Json& j) {
  return fields([&] {
    UserProfile p;
    p.account = require_string(j, "account");
    p.location = require_string(j, "location");
    for (const auto& r : require_field(j, "roles")) {
      auto role = r.is_string() ? parse_role(r.get<std::string>()) : std::nullopt;
      if (!role) throw std::invalid_argument("unknown role " + r.dump());
      p.roles.insert(*role);
    }
    p.rating_sum = j.contains("rating_sum") ? require_int(j, "rating_sum") : 0;
    p.rating_count = j.contains("rating_count") ? require_int(j, "rating_count") : 0;
    return p;
  });
}

Json Listing::to_json() const {
  Json terms = agreements::terms_to_json(preferred_terms);
  terms["kind"] = agreements::to_string(agreements::kind_of(preferred_terms));
  Json j = {{"capacity_w", capacity_w}, {"capital_c", capital_c}, {"listing_id", listing_id},
            {"location", location},     {"owner", owner},         {"preferred_terms", terms},
            {"status", to_string(status)}, {"system_type", sources_json(system_type)}};
  if (grid_operator) j["grid_operator"] = *grid_operator;
  return j;
}

Listing Listing::from_json(const Json& j) {
  return fields([&] {
    Listing l;
    l.listing_id = j.contains("listing_id") ? require_string(j, "listing_id") : "";
    l.owner = require_string(j, "owner");
    l.system_type = sources_from(j, "system_type");
    l.capacity_w = require_int(j, "capacity_w");
    l.capital_c = j.contains("capital_c") ? require_int(j, "capital_c") : 0;
    l.location = require_string(j, "location");
    const auto& terms = require_field(j, "preferred_terms");
    auto kind = agreements::parse_agreement_kind(require_string(terms, "kind"));
    if (!kind) throw std::invalid_argument("unknown agreement kind in preferred_terms");
    l.preferred_terms = agreements::terms_from_json(*kind, terms);
    if (j.contains("grid_operator")) l.grid_operator = require_string(j, "grid_operator");
    if (j.contains("status")) l.status = parse_status(require_string(j, "status"));
    return l;
  });
}

Json Request::to_json() const {
  return {{"consumer", consumer},
          {"location", location},
          {"premises_area_m2", premises_area_m2},
          {"premises_id", premises_id},
          {"request_id", request_id},
          {"source_preference", sources_json(source_preference)},
          {"status", to_string(status)}};
}

Request Request::from_json(const Json& j) {
  return fields([&] {
    Request r;
    r.request_id = j.contains("request_id") ? require_string(j, "request_id") : "";
    r.consumer = require_string(j, "consumer");
    r.premises_area_m2 = require_int(j, "premises_area_m2");
    r.location = require_string(j, "location");
    r.source_preference = sources_from(j, "source_preference");
    r.premises_id = j.contains("premises_id") ? require_string(j, "premises_id") : "";
    if (j.contains("status")) r.status = parse_status(require_string(j, "status"));
    return r;
  });
}

Json Rating::to_json() const {
  return {{"agreement_id", agreement_id.hex()}, {"period_id", period_id}, {"ratee", ratee},
          {"rater", rater},                     {"stars", stars}};
}

Rating Rating::from_json(const Json& j) {
  return fields([&] {
    return Rating{require_string(j, "rater"), require_string(j, "ratee"),
                  Hash256::from_hex(require_string(j, "agreement_id")), require_int(j, "period_id"),
                  require_int(j, "stars")};
  });
}

Json MatchProposal::to_json() const {
  return {{"listing_id", listing_id}, {"request_id", request_id}, {"score", score}};
}

std::int64_t match_score(const Listing& l, const Request& r, const UserProfile& owner) {
  std::int64_t score = l.location == r.location ? 100 : 0;
  bool source_ok = r.source_preference.empty() ||
                   std::any_of(r.source_preference.begin(), r.source_preference.end(),
                               [&](Source s) { return l.system_type.count(s) != 0; });
  if (source_ok) score += 50;
  return score + std::min<std::int64_t>(owner.average_x10(), 50);
}

Marketplace::Marketplace(ledger::LedgerPort& ledger, AccountId committer)
    : ledger_(ledger), committer_(std::move(committer)) {}

Hash256 Marketplace::commit(const char* type, const Json& record) {
  Json payload = {{"commitment", canonical_hash(record).hex()}, {"event", type}};
  return ledger_.submit(ledger::TxKind::AgreementRecord, std::move(payload), committer_);
}

UserProfile Marketplace::register_user(UserProfile profile) {
  if (profile.account.empty() || profile.roles.empty() || profile.location.empty())
    fail(MarketErrc::InvalidFields, "a user needs an account id, at least one role and a location");
  profile.rating_sum = 0;
  profile.rating_count = 0;
  std::unique_lock lock(mu_);
  if (users_.count(profile.account) != 0) fail(MarketErrc::DuplicateUser, "'" + profile.account + "' already exists");
  users_.emplace(profile.account, profile);
  return profile;
}

std::optional<UserProfile> Marketplace::user(const AccountId& account) const {
  std::shared_lock lock(mu_);
  auto it = users_.find(account);
  if (it == users_.end()) return std::nullopt;
  return it->second;
}

std::vector<UserProfile> Marketplace::users() const {
  std::shared_lock lock(mu_);
  std::vector<UserProfile> out;
  for (const auto& [id, u] : users_) out.push_back(u);
  return out;
}

Listing Marketplace::post_listing(Listing l) {
  if (l.capacity_w <= 0) fail(MarketErrc::InvalidFields, "capacity_w must be positive");
  if (l.system_type.empty()) fail(MarketErrc::InvalidFields, "system_type must name at least one source");
  if (l.capital_c < 0) fail(MarketErrc::InvalidFields, "capital_c must be non-negative");
  if (l.location.empty()) fail(MarketErrc::InvalidFields, "location must be non-empty");
  fields([&] {
    agreements::validate_terms(l.preferred_terms, {l.owner, {}, l.grid_operator});
    return 0;
  });

  std::unique_lock lock(mu_);
  auto owner = users_.find(l.owner);
  if (owner == users_.end()) fail(MarketErrc::UnknownUser, "unknown user '" + l.owner + "'");
  if (!owner->second.has(Role::Owner) && !owner->second.has(Role::Prosumer))
    fail(MarketErrc::WrongRole, "'" + l.owner + "' needs the Owner or Prosumer role to post a listing");
  if (l.grid_operator) {
    auto g = users_.find(*l.grid_operator);
    if (g == users_.end() || !g->second.has(Role::GridOperator))
      fail(MarketErrc::WrongRole, "'" + *l.grid_operator + "' is not a registered grid operator");
  }
  l.listing_id = make_id('L', next_listing_);
  l.status = RecordStatus::Open;
  commit("listing", l.to_json());
  ++next_listing_;
  listings_.emplace(l.listing_id, l);
  return l;
}

Request Marketplace::post_request(Request r) {
  if (r.premises_area_m2 <= 0) fail(MarketErrc::InvalidFields, "premises_area_m2 must be positive");
  if (r.location.empty()) fail(MarketErrc::InvalidFields, "location must be non-empty");

  std::unique_lock lock(mu_);
  auto consumer = users_.find(r.consumer);
  if (consumer == users_.end()) fail(MarketErrc::UnknownUser, "unknown user '" + r.consumer + "'");
  if (!consumer->second.has(Role::Consumer) && !consumer->second.has(Role::Prosumer))
    fail(MarketErrc::WrongRole, "'" + r.consumer + "' needs the Consumer or Prosumer role to post a request");
  r.request_id = make_id('R', next_request_);
  if (r.premises_id.empty()) r.premises_id = r.request_id;
  r.status = RecordStatus::Open;
  commit("request", r.to_json());
  ++next_request_;
  requests_.emplace(r.request_id, r);
  return r;
}

Listing Marketplace::withdraw_listing(const std::string& listing_id, const AccountId& by) {
  std::unique_lock lock(mu_);
  auto it = listings_.find(listing_id);
  if (it == listings_.end()) fail(MarketErrc::UnknownListing, "unknown listing " + listing_id);
  if (it->second.owner != by) fail(MarketErrc::WrongRole, "only the owner can withdraw " + listing_id);
  if (it->second.status != RecordStatus::Open) fail(MarketErrc::NotOpen, listing_id + " is not open");
  it->second.status = RecordStatus::Withdrawn;
  return it->second;
}

Request Marketplace::withdraw_request(const std::string& request_id, const AccountId& by) {
  std::unique_lock lock(mu_);
  auto it = requests_.find(request_id);
  if (it == requests_.end()) fail(MarketErrc::UnknownRequest, "unknown request " + request_id);
  if (it->second.consumer != by) fail(MarketErrc::WrongRole, "only the consumer can withdraw " + request_id);
  if (it->second.status != RecordStatus::Open) fail(MarketErrc::NotOpen, request_id + " is not open");
  it->second.status = RecordStatus::Withdrawn;
  return it->second;
}

std::optional<Listing> Marketplace::listing(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = listings_.find(id);
  if (it == listings_.end()) return std::nullopt;
  return it->second;
}

std::optional<Request> Marketplace::request(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = requests_.find(id);
  if (it == requests_.end()) return std::nullopt;
  return it->second;
}

std::vector<Listing> Marketplace::search_listings(const std::optional<std::string>& region,
                                                  const std::optional<Source>& source) const {
  std::shared_lock lock(mu_);
  std::vector<Listing> out;
  for (const auto& [id, l] : listings_) {
    if (l.status != RecordStatus::Open) continue;
    if (region && l.location != *region) continue;
    if (source && l.system_type.count(*source) == 0) continue;
    out.push_back(l);
  }
  return out;
}

std::vector<MatchProposal> Marketplace::matches(const std::string& request_id) const {
  std::shared_lock lock(mu_);
  auto rit = requests_.find(request_id);
  if (rit == requests_.end()) fail(MarketErrc::UnknownRequest, "unknown request " + request_id);
  const auto& req = rit->second;
  if (req.status != RecordStatus::Open) fail(MarketErrc::NotOpen, request_id + " is not open");
  std::vector<MatchProposal> out;
  for (const auto& [id, l] : listings_) {
    if (l.status != RecordStatus::Open || l.owner == req.consumer) continue;
    out.push_back({id, request_id, match_score(l, req, users_.at(l.owner))});
  }
  std::sort(out.begin(), out.end(), [](const MatchProposal& a, const MatchProposal& b) {
    return a.score != b.score ? a.score > b.score : a.listing_id < b.listing_id;
  });
  return out;
}

Agreement Marketplace::accept_match(const std::string& listing_id, const std::string& request_id,
                                    std::int64_t start_period) {
  std::unique_lock lock(mu_);
  auto lit = listings_.find(listing_id);
  if (lit == listings_.end()) fail(MarketErrc::UnknownListing, "unknown listing " + listing_id);
  auto rit = requests_.find(request_id);
  if (rit == requests_.end()) fail(MarketErrc::UnknownRequest, "unknown request " + request_id);
  auto& l = lit->second;
  auto& r = rit->second;
  if (l.status == RecordStatus::Withdrawn || r.status == RecordStatus::Withdrawn)
    fail(MarketErrc::NotOpen, listing_id + " or " + request_id + " was withdrawn");
  if (l.status == RecordStatus::Matched || r.status == RecordStatus::Matched)
    fail(MarketErrc::RaceLost, listing_id + " or " + request_id + " was already matched");

  auto draft = agreements::propose_agreement({l.owner, r.consumer, l.grid_operator}, l.preferred_terms,
                                             r.premises_id, start_period, listing_id + "/" + request_id);
  commit("match", {{"agreement_id", draft.agreement_id.hex()}, {"listing_id", listing_id}, {"request_id", request_id}});
  l.status = RecordStatus::Matched;
  r.status = RecordStatus::Matched;
  return draft;
}

UserProfile Marketplace::rate(const AccountId& rater, const Agreement& agreement, std::int64_t period_id,
                              std::int64_t stars, bool period_settled) {
  const auto& p = agreement.parties;
  if (rater != p.owner && rater != p.consumer)
    fail(MarketErrc::NotCounterparty, "'" + rater + "' is not a principal of this agreement");
  if (stars < 1 || stars > 5) fail(MarketErrc::StarsOutOfRange, "stars must be within [1, 5]");
  if (!period_settled) fail(MarketErrc::PeriodNotSettled, "period " + std::to_string(period_id) + " is not settled");
  const AccountId ratee = rater == p.owner ? p.consumer : p.owner;

  std::unique_lock lock(mu_);
  auto key = std::make_tuple(rater, agreement.agreement_id, period_id);
  if (rated_.count(key) != 0)
    fail(MarketErrc::DuplicateRating, "'" + rater + "' already rated period " + std::to_string(period_id));
  auto it = users_.find(ratee);
  if (it == users_.end()) fail(MarketErrc::UnknownUser, "unknown user '" + ratee + "'");

  Rating rating{rater, ratee, agreement.agreement_id, period_id, stars};
  ledger_.submit(ledger::TxKind::RatingRecord, rating.to_json(), rater);
  rated_.insert(key);
  ratings_.push_back(rating);
  it->second.rating_sum += stars;
  it->second.rating_count += 1;
  return it->second;
}

std::vector<Rating> Marketplace::ratings() const {
  std::shared_lock lock(mu_);
  return ratings_;
}

std::vector<Json> Marketplace::export_records() const {
  std::shared_lock lock(mu_);
  std::vector<Json> out;
  for (const auto& [id, u] : users_) out.push_back({{"record", u.to_json()}, {"type", "user"}});
  for (const auto& [id, l] : listings_) out.push_back({{"record", l.to_json()}, {"type", "listing"}});
  for (const auto& [id, r] : requests_) out.push_back({{"record", r.to_json()}, {"type", "request"}});
  for (const auto& r : ratings_) out.push_back({{"record", r.to_json()}, {"type", "rating"}});
  return out;
}

void Marketplace::import_records(const std::vector<Json>& records) {
  std::unique_lock lock(mu_);
  for (const auto& rec : records) {
    auto type = require_string(rec, "type");
    const auto& body = require_field(rec, "record");
    if (type == "user") {
      auto u = UserProfile::from_json(body);
      users_[u.account] = u;
    } else if (type == "listing") {
      auto l = Listing::from_json(body);
      next_listing_ = std::max(next_listing_, id_number(l.listing_id) + 1);
      listings_[l.listing_id] = l;
    } else if (type == "request") {
      auto r = Request::from_json(body);
      next_request_ = std::max(next_request_, id_number(r.request_id) + 1);
      requests_[r.request_id] = r;
    } else if (type == "rating") {
      auto r = Rating::from_json(body);
      if (rated_.insert({r.rater, r.agreement_id, r.period_id}).second) ratings_.push_back(r);
    } else {
      fail(MarketErrc::InvalidFields, "unknown record type '" + type + "'");
    }
  }
}

}  // namespace emarket::marketplace

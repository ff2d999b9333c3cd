#include "emarket/gateway/scenario.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace emarket::gateway {

namespace {

std::string describe(const std::string& field, const std::string& message, std::optional<std::size_t> line) {
  std::string out = "scenario invalid";
  if (line) out += " at line " + std::to_string(*line);
  if (!field.empty()) out += " (" + field + ")";
  return out + ": " + message;
}

[[noreturn]] void invalid(const std::string& field, const std::string& message) { throw ScenarioInvalid(field, message); }

std::string at(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string at(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

const Json& member(const Json& j, const std::string& path, const char* key) {
  if (!j.is_object()) invalid(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) invalid(at(path, key), "missing field");
  return *it;
}

std::string str(const Json& j, const std::string& path, const char* key) {
  const auto& v = member(j, path, key);
  if (!v.is_string() || v.get<std::string>().empty()) invalid(at(path, key), "expected a non-empty string");
  return v.get<std::string>();
}

std::int64_t num(const Json& j, const std::string& path, const char* key, std::optional<std::int64_t> fallback = {}) {
  if (fallback && (!j.is_object() || !j.contains(key))) return *fallback;
  const auto& v = member(j, path, key);
  if (!v.is_number_integer()) invalid(at(path, key), "expected an integer");
  return v.get<std::int64_t>();
}

const Json& list(const Json& j, const std::string& path, const char* key) {
  static const Json empty = Json::array();
  if (!j.contains(key)) return empty;
  const auto& v = j.at(key);
  if (!v.is_array()) invalid(at(path, key), "expected an array");
  return v;
}

// Runs a module parser, turning its exceptions into field diagnostics.
template <class F>
auto parsed(const std::string& path, F&& fn) {
  try {
    return fn();
  } catch (const ScenarioInvalid&) {
    throw;
  } catch (const std::exception& e) {
    invalid(path, e.what());
  }
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

}  // namespace

ScenarioInvalid::ScenarioInvalid(std::string field, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(describe(field, message, line)), field_(std::move(field)), message_(message), line_(line) {}

Scenario parse_scenario(const Json& j) {
  if (!j.is_object()) invalid("", "scenario must be a JSON object");
  Scenario s;
  s.name = j.value("name", std::string("scenario"));
  s.seed = static_cast<std::uint64_t>(num(j, "", "seed", 0));
  auto bits = num(j, "", "difficulty_bits", 4);
  if (bits < 0 || bits > 32) invalid("/difficulty_bits", "must be within [0, 32]");
  s.difficulty_bits = static_cast<unsigned>(bits);
  s.confirm_timeout = num(j, "", "confirm_timeout", 10);
  if (s.confirm_timeout < 1) invalid("/confirm_timeout", "must be at least 1");
  if (j.contains("policy")) {
    s.policy = parsed("/policy", [&] { return settlement::RewardPolicy::from_json(j.at("policy")); });
    parsed("/policy", [&] {
      s.policy.validate();
      return 0;
    });
  }
  if (j.contains("firmware"))
    s.firmware = parsed("/firmware", [&] { return j.at("firmware").get<std::vector<std::string>>(); });
  if (j.contains("network")) {
    s.network = parsed("/network", [&] {
      auto n = netsim::NetworkConfig::from_json(j.at("network"));
      n.validate();
      return n;
    });
  }
  s.ticks_per_period = static_cast<std::uint64_t>(num(j, "", "ticks_per_period", 0));
  if (j.contains("mining")) {
    if (!s.network) invalid("/mining", "a mining script needs a network");
    s.mining = parsed("/mining", [&] { return netsim::mining_script_from_json(j.at("mining")); });
    for (std::size_t i = 0; i < s.mining.size(); ++i) {
      if (s.mining[i].node >= s.network->node_count) invalid(at("/mining", i) + "/node", "unknown node");
      if (s.mining[i].node == 0) invalid(at("/mining", i) + "/node", "node 0 is the operator and mines on its own");
      if (i > 0 && s.mining[i].tick < s.mining[i - 1].tick) invalid(at("/mining", i) + "/tick", "ticks must be sorted");
    }
  }

  std::set<AccountId> accounts{"operator", "treasury", "market"};
  const auto& users = list(j, "", "users");
  for (std::size_t i = 0; i < users.size(); ++i) {
    auto path = at("/users", i);
    auto p = parsed(path, [&] { return marketplace::UserProfile::from_json(users[i]); });
    if (!accounts.insert(p.account).second) invalid(path + "/account", "duplicate or reserved account '" + p.account + "'");
    s.users.push_back(p);
  }
  auto need_user = [&](const std::string& path, const AccountId& who) {
    if (!accounts.count(who)) invalid(path, "unknown user '" + who + "'");
  };

  std::set<std::string> device_names;
  const auto& devices = list(j, "", "devices");
  for (std::size_t i = 0; i < devices.size(); ++i) {
    auto path = at("/devices", i);
    ScenarioDevice d{str(devices[i], path, "name"), devices[i].value("firmware", std::string("meter-fw-1.0")),
                     str(devices[i], path, "premises_id")};
    if (!device_names.insert(d.name).second) invalid(path + "/name", "duplicate device name '" + d.name + "'");
    s.devices.push_back(d);
  }

  std::set<std::string> listing_names, request_names;
  const auto& listings = list(j, "", "listings");
  for (std::size_t i = 0; i < listings.size(); ++i) {
    auto path = at("/listings", i);
    auto name = str(listings[i], path, "name");
    auto l = parsed(path, [&] { return marketplace::Listing::from_json(listings[i]); });
    need_user(path + "/owner", l.owner);
    if (l.grid_operator) need_user(path + "/grid_operator", *l.grid_operator);
    if (!listing_names.insert(name).second) invalid(path + "/name", "duplicate listing name '" + name + "'");
    s.listings.emplace_back(name, l);
  }
  const auto& requests = list(j, "", "requests");
  for (std::size_t i = 0; i < requests.size(); ++i) {
    auto path = at("/requests", i);
    auto name = str(requests[i], path, "name");
    auto r = parsed(path, [&] { return marketplace::Request::from_json(requests[i]); });
    need_user(path + "/consumer", r.consumer);
    if (!request_names.insert(name).second) invalid(path + "/name", "duplicate request name '" + name + "'");
    s.requests.emplace_back(name, r);
  }

  std::set<std::string> agreement_names;
  const auto& agreements = list(j, "", "agreements");
  for (std::size_t i = 0; i < agreements.size(); ++i) {
    auto path = at("/agreements", i);
    const auto& a = agreements[i];
    ScenarioAgreement sa{str(a, path, "name"), str(a, path, "listing"), str(a, path, "request"),
                         num(a, path, "start_period", 1), a.value("sign", true)};
    if (!listing_names.count(sa.listing)) invalid(path + "/listing", "unknown listing '" + sa.listing + "'");
    if (!request_names.count(sa.request)) invalid(path + "/request", "unknown request '" + sa.request + "'");
    if (!agreement_names.insert(sa.name).second) invalid(path + "/name", "duplicate agreement name '" + sa.name + "'");
    s.agreements.push_back(sa);
  }

  const auto& periods = list(j, "", "periods");
  for (std::size_t i = 0; i < periods.size(); ++i) {
    auto path = at("/periods", i);
    const auto& pj = periods[i];
    ScenarioPeriod p;
    p.period = num(pj, path, "period");
    if (p.period != static_cast<std::int64_t>(i) + 1)
      invalid(path + "/period", "periods must be contiguous from 1; expected " + std::to_string(i + 1));
    const auto& readings = list(pj, path, "readings");
    for (std::size_t k = 0; k < readings.size(); ++k) {
      auto rp = at(path + "/readings", k);
      const auto& rj = readings[k];
      ScenarioReading r;
      r.device = str(rj, rp, "device");
      if (!device_names.count(r.device)) invalid(rp + "/device", "unknown device '" + r.device + "'");
      const auto& gen = member(rj, rp, "generated_wh");
      if (!gen.is_object()) invalid(rp + "/generated_wh", "expected an object of source -> Wh");
      for (const auto& [src, v] : gen.items()) {
        auto source = metering::parse_source(src);
        if (!source) invalid(rp + "/generated_wh/" + src, "unknown energy source");
        if (!v.is_number_integer()) invalid(rp + "/generated_wh/" + src, "expected an integer");
        r.generated_wh[*source] = v.get<std::int64_t>();
      }
      r.consumed_wh = num(rj, rp, "consumed_wh");
      r.exported_wh = num(rj, rp, "exported_wh", 0);
      r.pay = rj.value("pay", true);
      p.readings.push_back(r);
    }
    const auto& ratings = list(pj, path, "ratings");
    for (std::size_t k = 0; k < ratings.size(); ++k) {
      auto rp = at(path + "/ratings", k);
      ScenarioRating r{str(ratings[k], rp, "rater"), str(ratings[k], rp, "agreement"), num(ratings[k], rp, "stars")};
      need_user(rp + "/rater", r.rater);
      if (!agreement_names.count(r.agreement)) invalid(rp + "/agreement", "unknown agreement '" + r.agreement + "'");
      p.ratings.push_back(r);
    }
    const auto& redeem = list(pj, path, "redeem");
    for (std::size_t k = 0; k < redeem.size(); ++k) {
      auto rp = at(path + "/redeem", k);
      ScenarioRedeem r{str(redeem[k], rp, "account"), num(redeem[k], rp, "amount_mt")};
      need_user(rp + "/account", r.account);
      auto mode = settlement::parse_redeem_mode(redeem[k].value("mode", std::string("Cash")));
      if (!mode) invalid(rp + "/mode", "expected Cash or EnergyCredit");
      r.mode = *mode;
      p.redeem.push_back(r);
    }
    const auto& terminate = list(pj, path, "terminate");
    for (std::size_t k = 0; k < terminate.size(); ++k) {
      auto rp = at(path + "/terminate", k);
      ScenarioTermination t{str(terminate[k], rp, "agreement"), num(terminate[k], rp, "at_period", p.period)};
      if (!agreement_names.count(t.agreement)) invalid(rp + "/agreement", "unknown agreement '" + t.agreement + "'");
      p.terminate.push_back(t);
    }
    s.periods.push_back(std::move(p));
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ScenarioInvalid("", e.what(), line_of(text, e.byte));
  }
  return parse_scenario(j);
}

namespace {

// Drives one scenario against an engine and, with a network, the simulation.
class Runner {
 public:
  Runner(const Scenario& s, std::uint64_t seed) : s_(s), seed_(seed), engine_(config(), network()) {
    engine_.set_auto_mine(false);
    if (auto* sim = engine_.simulation()) {
      per_period_ = s.ticks_per_period;
      if (per_period_ == 0) per_period_ = sim->config().diameter() * std::max<std::uint64_t>(1, sim->config().max_latency()) + 1;
    }
  }

  Json run() {
    setup();
    for (const auto& p : s_.periods) period(p);
    drain();
    return report();
  }

 private:
  ServiceConfig config() const {
    ServiceConfig c;
    c.seed = seed_;
    c.difficulty_bits = s_.difficulty_bits;
    c.confirm_timeout = s_.confirm_timeout;
    c.policy = s_.policy;
    c.firmware = s_.firmware;
    return c;
  }

  std::optional<netsim::NetworkConfig> network() const {
    if (!s_.network) return std::nullopt;
    auto n = *s_.network;
    n.rng_seed = seed_;
    return n;
  }

  void setup() {
    for (const auto& u : s_.users) engine_.register_user(u);
    for (const auto& d : s_.devices) devices_[d.name] = engine_.provision_device(d.firmware, d.premises_id).device.device_id;
    for (const auto& [name, l] : s_.listings) listings_[name] = engine_.post_listing(l).listing_id;
    for (const auto& [name, r] : s_.requests) requests_[name] = engine_.post_request(r).request_id;
    for (const auto& a : s_.agreements) {
      auto draft = engine_.accept_match(listings_.at(a.listing), requests_.at(a.request), a.start_period);
      agreements_[a.name] = draft.agreement_id;
      if (a.sign)
        for (const auto& who : draft.parties.named()) engine_.sign_agreement(draft.agreement_id, who, std::nullopt);
    }
    settle_network();
  }

  void period(const ScenarioPeriod& p) {
    for (const auto& r : p.readings) {
      metering::ReadingFields f;
      f.device_id = devices_.at(r.device);
      f.period_id = static_cast<std::uint64_t>(p.period);
      f.generated_wh = r.generated_wh;
      f.consumed_wh = r.consumed_wh;
      f.exported_wh = r.exported_wh;
      auto out = engine_.submit_reading(engine_.simulate_reading(f), r.pay);
      if (!out.ingest.accepted) ++rejected_;
      else if (!out.invoice) notes_.push_back("period " + std::to_string(p.period) + " " + r.device + ": " + out.settlement);
    }
    settle_network();
    for (const auto& r : p.ratings) {
      try {
        engine_.rate(r.rater, agreements_.at(r.agreement), p.period, r.stars);
      } catch (const std::exception& e) {
        notes_.push_back("period " + std::to_string(p.period) + " rating by " + r.rater + ": " + e.what());
      }
    }
    for (const auto& r : p.redeem) {
      try {
        engine_.redeem(r.account, r.amount_mt, r.mode);
      } catch (const std::exception& e) {
        notes_.push_back("period " + std::to_string(p.period) + " redeem by " + r.account + ": " + e.what());
      }
    }
    for (const auto& t : p.terminate) {
      try {
        engine_.terminate_agreement(agreements_.at(t.agreement), t.at_period, {});
      } catch (const std::exception& e) {
        notes_.push_back("period " + std::to_string(p.period) + " terminate " + t.agreement + ": " + e.what());
      }
    }
    settle_network();
  }

  // Mine, let the network carry the block, resolve invoices.
  void settle_network() {
    engine_.pump();
    advance(per_period_);
    engine_.pump();
  }

  void advance(std::uint64_t ticks) {
    auto* sim = engine_.simulation();
    if (!sim) return;
    for (std::uint64_t i = 0; i < ticks; ++i) {
      engine_.ledger().locked([&] {
        while (next_mining_ < s_.mining.size() && s_.mining[next_mining_].tick <= sim->tick()) {
          sim->mine(s_.mining[next_mining_].node, {});
          ++next_mining_;
        }
        sim->step();
        if (sim->converged()) {
          if (!converged_since_) converged_since_ = sim->tick();
        } else {
          converged_since_.reset();
        }
        return 0;
      });
    }
  }

  void drain() {
    auto* sim = engine_.simulation();
    for (int round = 0; round < 100; ++round) {
      engine_.pump();
      if (!sim) return;
      const auto last_mining = s_.mining.empty() ? 0 : s_.mining.back().tick;
      std::uint64_t guard = 0;
      while ((sim->pending_events() > 0 || next_mining_ < s_.mining.size() || sim->tick() <= last_mining) &&
             guard++ < 100000)
        advance(1);
      advance(per_period_);
      if (engine_.ledger().pending() == 0 && sim->converged()) return;
    }
  }

  Json report() const {
    Json j;
    j["scenario"] = s_.name;
    j["seed"] = seed_;
    j["head"] = {{"hash", engine_.ledger().head().hex()}, {"height", engine_.ledger().height()}};

    Json balances = Json::array();
    std::int64_t cash = 0, tokens = 0;
    for (const auto& b : engine_.balances()) {
      balances.push_back(b.to_json());
      cash += b.cash_c;
      tokens += b.tokens_mt;
    }
    j["balances"] = balances;
    j["cash_total_c"] = cash;
    j["token_total_mt"] = tokens;

    Json invoices = Json::array();
    for (const auto& inv : engine_.invoices(std::nullopt, std::nullopt)) invoices.push_back(inv.to_json());
    j["invoices"] = invoices;

    Json agreements = Json::object();
    for (const auto& [name, id] : agreements_) {
      auto a = *engine_.agreement(id);
      agreements[name] = {{"agreement_id", id.hex()},
                          {"ownership_transferred", a.ownership_transferred()},
                          {"periods_elapsed", a.periods_elapsed},
                          {"state", agreements::to_string(a.state)}};
    }
    j["agreements"] = agreements;

    Json profiles = Json::array();
    for (const auto& u : engine_.market().users())
      profiles.push_back({{"account", u.account}, {"rating_count", u.rating_count}, {"rating_sum", u.rating_sum}});
    j["profiles"] = profiles;
    j["rejected_readings"] = rejected_;
    j["notes"] = notes_;

    if (const auto* sim = engine_.simulation()) {
      Json heads = Json::array();
      for (const auto& h : sim->heads()) heads.push_back(h.hex());
      j["node_heads"] = heads;
      j["final_tick"] = sim->tick();
      j["convergence_tick"] = converged_since_ ? Json(*converged_since_) : Json(nullptr);
    } else {
      j["convergence_tick"] = 0;
    }
    return j;
  }

  const Scenario& s_;
  std::uint64_t seed_;
  Engine engine_;
  std::uint64_t per_period_ = 0;
  std::size_t next_mining_ = 0;
  std::optional<std::uint64_t> converged_since_;
  std::map<std::string, DeviceId> devices_;
  std::map<std::string, std::string> listings_, requests_;
  std::map<std::string, Hash256> agreements_;
  std::size_t rejected_ = 0;
  std::vector<std::string> notes_;
};

}  // namespace

Json run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed_override) {
  Runner runner(scenario, seed_override.value_or(scenario.seed));
  return runner.run();
}

}  // namespace emarket::gateway

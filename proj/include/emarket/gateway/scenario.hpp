#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emarket/gateway/engine.hpp"

namespace emarket::gateway {

// field is a JSON pointer into the scenario ("/agreements/0/listing"); line
// is set for syntax errors.
class ScenarioInvalid : public std::runtime_error {
 public:
  ScenarioInvalid(std::string field, const std::string& message, std::optional<std::size_t> line = std::nullopt);
  const std::string& field() const { return field_; }
  std::optional<std::size_t> line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  std::string field_;
  std::string message_;
  std::optional<std::size_t> line_;
};

struct ScenarioDevice {
  std::string name;
  std::string firmware;
  std::string premises_id;
};

struct ScenarioAgreement {
  std::string name;
  std::string listing;
  std::string request;
  std::int64_t start_period = 1;
  bool sign = true;
};

struct ScenarioReading {
  std::string device;
  metering::EnergyBySource generated_wh;
  std::int64_t consumed_wh = 0;
  std::int64_t exported_wh = 0;
  bool pay = true;
};

struct ScenarioRating {
  AccountId rater;
  std::string agreement;
  std::int64_t stars = 0;
};

struct ScenarioRedeem {
  AccountId account;
  std::int64_t amount_mt = 0;
  settlement::RedeemMode mode = settlement::RedeemMode::Cash;
};

struct ScenarioTermination {
  std::string agreement;
  std::int64_t at_period = 0;
};

struct ScenarioPeriod {
  std::int64_t period = 0;
  std::vector<ScenarioReading> readings;
  std::vector<ScenarioRating> ratings;
  std::vector<ScenarioRedeem> redeem;
  std::vector<ScenarioTermination> terminate;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  unsigned difficulty_bits = 4;
  std::int64_t confirm_timeout = 10;
  settlement::RewardPolicy policy;
  std::vector<std::string> firmware{"meter-fw-1.0"};
  std::optional<netsim::NetworkConfig> network;
  std::uint64_t ticks_per_period = 0;  // 0: diameter * max latency + 1
  std::vector<netsim::MiningEntry> mining;  // empty blocks from other nodes

  std::vector<marketplace::UserProfile> users;
  std::vector<ScenarioDevice> devices;
  std::vector<std::pair<std::string, marketplace::Listing>> listings;
  std::vector<std::pair<std::string, marketplace::Request>> requests;
  std::vector<ScenarioAgreement> agreements;
  std::vector<ScenarioPeriod> periods;
};

// Throws ScenarioInvalid for shape errors and dangling references.
Scenario parse_scenario(const Json& j);
Scenario load_scenario(const std::string& path);

// Deterministic: equal inputs give byte-identical reports.
Json run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace emarket::gateway

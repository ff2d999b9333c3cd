#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emarket/settlement/settlement.hpp"

namespace emarket::gateway {

struct ConfigInvalid : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;  // empty: in-memory only
  std::optional<PublicKey> root_pubkey;  // unset: the built-in dev manufacturer
  std::vector<std::string> firmware{"meter-fw-1.0"};
  settlement::RewardPolicy policy;
  unsigned difficulty_bits = 8;
  std::int64_t confirm_timeout = 10;  // blocks
  std::uint64_t seed = 0;
  std::int64_t token_rate_c = 10;  // cents per whole token
  std::int64_t genesis_time = 1'700'000'000;
  std::int64_t block_interval_s = 60;

  // Throws ConfigInvalid.
  void validate() const;
  Json to_json() const;
  // Overlays the keys present in j; unknown keys throw ConfigInvalid.
  void apply(const Json& j);
};

// Layers, lowest first: defaults, config file, EMARKET_* environment, CLI.
// Environment names are the upper-cased keys (EMARKET_DIFFICULTY_BITS, ...).
ServiceConfig resolve_config(const std::optional<Json>& file, const std::map<std::string, std::string>& env,
                             const Json& cli);

std::map<std::string, std::string> emarket_environment();

}  // namespace emarket::gateway

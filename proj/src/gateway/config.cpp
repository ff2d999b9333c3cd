#include "emarket/gateway/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>

extern char** environ;

namespace emarket::gateway {

namespace {

const std::vector<std::string> kKeys{"host",      "port",          "data_dir",        "root_pubkey",
                                     "firmware",  "policy",        "difficulty_bits", "confirm_timeout",
                                     "seed",      "token_rate_c",  "genesis_time",    "block_interval_s"};

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

// Environment values are strings; integers and JSON-shaped values are parsed.
Json env_value(const std::string& key, const std::string& raw) {
  if (key == "host" || key == "data_dir" || key == "root_pubkey") return raw;
  if (key == "firmware") {
    Json out = Json::array();
    std::size_t start = 0;
    while (start <= raw.size()) {
      auto end = raw.find(',', start);
      if (end == std::string::npos) end = raw.size();
      if (end > start) out.push_back(raw.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }
  if (key == "policy") {
    auto j = Json::parse(raw, nullptr, false);
    if (j.is_discarded()) throw ConfigInvalid("EMARKET_POLICY is not valid JSON");
    return j;
  }
  try {
    std::size_t used = 0;
    auto v = std::stoll(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigInvalid("EMARKET_" + upper(key) + " must be an integer, got '" + raw + "'");
  }
}

}  // namespace

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigInvalid("port must be within [0, 65535]");
  if (difficulty_bits > 32) throw ConfigInvalid("difficulty_bits must be within [0, 32]");
  if (confirm_timeout < 1) throw ConfigInvalid("confirm_timeout must be at least 1 block");
  if (token_rate_c < 0) throw ConfigInvalid("token_rate_c must be non-negative");
  if (block_interval_s < 1) throw ConfigInvalid("block_interval_s must be positive");
  if (firmware.empty()) throw ConfigInvalid("firmware whitelist must not be empty");
  try {
    policy.validate();
  } catch (const std::exception& e) {
    throw ConfigInvalid(e.what());
  }
  if (!data_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(data_dir, ec);
    if (ec || !std::filesystem::is_directory(data_dir))
      throw ConfigInvalid("data_dir '" + data_dir + "' cannot be created");
  }
}

Json ServiceConfig::to_json() const {
  Json j = {{"block_interval_s", block_interval_s},
            {"confirm_timeout", confirm_timeout},
            {"data_dir", data_dir},
            {"difficulty_bits", difficulty_bits},
            {"firmware", firmware},
            {"genesis_time", genesis_time},
            {"host", host},
            {"policy", policy.to_json()},
            {"port", port},
            {"seed", seed},
            {"token_rate_c", token_rate_c}};
  if (root_pubkey) j["root_pubkey"] = root_pubkey->hex();
  return j;
}

void ServiceConfig::apply(const Json& j) {
  if (!j.is_object()) throw ConfigInvalid("config must be a JSON object");
  for (const auto& [key, v] : j.items())
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) throw ConfigInvalid("unknown config key '" + key + "'");
  try {
    if (j.contains("host")) host = require_string(j, "host");
    if (j.contains("port")) port = static_cast<int>(require_int(j, "port"));
    if (j.contains("data_dir")) data_dir = require_string(j, "data_dir");
    if (j.contains("root_pubkey")) root_pubkey = PublicKey::from_hex(require_string(j, "root_pubkey"));
    if (j.contains("firmware")) firmware = j.at("firmware").get<std::vector<std::string>>();
    if (j.contains("policy")) {
      Json merged = policy.to_json();
      merged.update(require_field(j, "policy"));
      policy = settlement::RewardPolicy::from_json(merged);
    }
    if (j.contains("difficulty_bits")) {
      auto d = require_int(j, "difficulty_bits");
      if (d < 0 || d > 32) throw ConfigInvalid("difficulty_bits must be within [0, 32]");
      difficulty_bits = static_cast<unsigned>(d);
    }
    if (j.contains("confirm_timeout")) confirm_timeout = require_int(j, "confirm_timeout");
    if (j.contains("seed")) {
      auto s = require_int(j, "seed");
      if (s < 0) throw ConfigInvalid("seed must be non-negative");
      seed = static_cast<std::uint64_t>(s);
    }
    if (j.contains("token_rate_c")) token_rate_c = require_int(j, "token_rate_c");
    if (j.contains("genesis_time")) genesis_time = require_int(j, "genesis_time");
    if (j.contains("block_interval_s")) block_interval_s = require_int(j, "block_interval_s");
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigInvalid(e.what());
  }
}

ServiceConfig resolve_config(const std::optional<Json>& file, const std::map<std::string, std::string>& env,
                             const Json& cli) {
  ServiceConfig c;
  if (file) c.apply(*file);
  Json from_env = Json::object();
  for (const auto& key : kKeys) {
    auto it = env.find("EMARKET_" + upper(key));
    if (it != env.end()) from_env[key] = env_value(key, it->second);
  }
  c.apply(from_env);
  if (!cli.is_null()) c.apply(cli);
  c.validate();
  return c;
}

std::map<std::string, std::string> emarket_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string::npos && kv.rfind("EMARKET_", 0) == 0) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

}  // namespace emarket::gateway

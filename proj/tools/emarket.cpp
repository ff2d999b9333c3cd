#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "emarket/gateway/http_api.hpp"
#include "emarket/gateway/scenario.hpp"

using namespace emarket;
using namespace emarket::gateway;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

gateway::HttpApi* g_api = nullptr;

void on_signal(int) {
  if (g_api) g_api->stop();
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = Json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("'" + path + "' is not valid JSON");
  return j;
}

struct ServeArgs {
  std::string config_file;
  std::optional<std::string> host, data_dir, root_pubkey;
  std::optional<int> port;
  std::optional<unsigned> difficulty_bits;
  std::optional<std::int64_t> confirm_timeout, token_rate_c;
  std::optional<std::uint64_t> seed;
};

int serve(const ServeArgs& a) {
  std::optional<Json> file;
  if (!a.config_file.empty()) file = read_json_file(a.config_file);
  Json cli = Json::object();
  if (a.host) cli["host"] = *a.host;
  if (a.port) cli["port"] = *a.port;
  if (a.data_dir) cli["data_dir"] = *a.data_dir;
  if (a.root_pubkey) cli["root_pubkey"] = *a.root_pubkey;
  if (a.difficulty_bits) cli["difficulty_bits"] = *a.difficulty_bits;
  if (a.confirm_timeout) cli["confirm_timeout"] = *a.confirm_timeout;
  if (a.token_rate_c) cli["token_rate_c"] = *a.token_rate_c;
  if (a.seed) cli["seed"] = *a.seed;
  auto config = resolve_config(file, emarket_environment(), cli);

  Engine engine(config);
  HttpApi api(engine);
  int port = api.bind(config.host, config.port);
  if (port < 0) {
    std::cerr << "emarket: cannot bind " << config.host << ":" << config.port << "\n";
    return kRuntime;
  }
  g_api = &api;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "emarket: listening on http://" << config.host << ":" << port << "/v1 (head "
            << engine.ledger().head().hex().substr(0, 16) << ", height " << engine.ledger().height() << ")\n";
  api.serve();
  g_api = nullptr;
  return kOk;
}

int sim_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out) {
  auto report = run_scenario(load_scenario(path), seed).dump(2) + "\n";
  if (out.empty()) {
    std::cout << report;
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
    f << report;
  }
  return kOk;
}

int ledger_verify(const std::string& path, std::uint64_t seed, const std::string& keys_file) {
  auto blocks = ledger::BlockLog::load(path);
  ledger::KeyDirectory keys;
  if (!keys_file.empty()) {
    for (const auto& [account, hex] : read_json_file(keys_file).items())
      keys.register_key(account, PublicKey::from_hex(hex.get<std::string>()));
  } else {
    // Custodial keys are derived from the service seed.
    for (const auto& b : blocks)
      for (const auto& tx : b.txs)
        if (!keys.contains(tx.author))
          keys.register_key(tx.author, ledger::derive_account_key(tx.author, "emarket/" + std::to_string(seed)).public_key());
  }
  if (blocks.empty() || !blocks.front().is_genesis()) blocks.insert(blocks.begin(), ledger::make_genesis());
  auto report = ledger::verify_chain(blocks, keys);
  if (!report) {
    std::cout << "INVALID at height " << (report.failed_height ? std::to_string(*report.failed_height) : "?") << ": " << report.reason << "\n";
    return kValidation;
  }
  std::size_t txs = 0;
  for (const auto& b : blocks) txs += b.txs.size();
  std::cout << "OK: " << blocks.size() << " blocks, " << txs << " transactions, head " << blocks.back().hash().hex()
            << "\n";
  return kOk;
}

int invoice_compute(const std::string& agreement_path, const std::string& reading_path, const std::string& policy_path) {
  auto agreement = agreements::Agreement::from_json(read_json_file(agreement_path));
  auto reading = metering::MeterReading::from_json(read_json_file(reading_path));
  // Offline: bill the reading's period as if the agreement were active there.
  auto offset = static_cast<std::int64_t>(reading.period_id) - agreement.start_period;
  if (offset < 0 || offset >= agreement.term_length())
    throw std::invalid_argument("reading period " + std::to_string(reading.period_id) + " is outside the agreement term");
  agreement.state = agreements::AgreementState::Active;
  agreement.periods_elapsed = offset;
  settlement::RewardPolicy policy;
  if (!policy_path.empty()) policy = settlement::RewardPolicy::from_json(read_json_file(policy_path));
  policy.validate();
  std::cout << settlement::settle_period(agreement, &reading, policy).to_json().dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emarket: renewable energy marketplace gateway"};
  app.require_subcommand(1);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--config", serve_args.config_file, "JSON config file");
  serve_cmd->add_option("--host", serve_args.host, "Listen address");
  serve_cmd->add_option("--port", serve_args.port, "Listen port (0 picks one)");
  serve_cmd->add_option("--data-dir", serve_args.data_dir, "Directory for ledger.jsonl and store.jsonl");
  serve_cmd->add_option("--root-pubkey", serve_args.root_pubkey, "Manufacturer root public key (hex)");
  serve_cmd->add_option("--difficulty-bits", serve_args.difficulty_bits, "Proof-of-work difficulty");
  serve_cmd->add_option("--confirm-timeout", serve_args.confirm_timeout, "Blocks before an invoice is Unpaid");
  serve_cmd->add_option("--token-rate", serve_args.token_rate_c, "Cents per redeemed token");
  serve_cmd->add_option("--seed", serve_args.seed, "Key derivation seed");

  auto* sim_cmd = app.add_subcommand("sim", "Simulation tools");
  sim_cmd->require_subcommand(1);
  auto* sim_run_cmd = sim_cmd->add_subcommand("run", "Run a scenario and print its report");
  std::string scenario_path, report_out;
  std::optional<std::uint64_t> sim_seed;
  sim_run_cmd->add_option("file", scenario_path, "Scenario JSON")->required();
  sim_run_cmd->add_option("--seed", sim_seed, "Override the scenario seed");
  sim_run_cmd->add_option("--out", report_out, "Write the report here instead of stdout");

  auto* ledger_cmd = app.add_subcommand("ledger", "Ledger tools");
  ledger_cmd->require_subcommand(1);
  auto* verify_cmd = ledger_cmd->add_subcommand("verify", "Verify a block log");
  std::string log_path, keys_file;
  std::uint64_t verify_seed = 0;
  verify_cmd->add_option("file", log_path, "ledger.jsonl")->required();
  verify_cmd->add_option("--seed", verify_seed, "Service seed used to derive custodial keys");
  verify_cmd->add_option("--keys", keys_file, "JSON object of account -> public key hex");

  auto* invoice_cmd = app.add_subcommand("invoice", "Settlement tools");
  invoice_cmd->require_subcommand(1);
  auto* compute_cmd = invoice_cmd->add_subcommand("compute", "Compute an invoice offline");
  std::string agreement_path, reading_path, policy_path;
  compute_cmd->add_option("agreement", agreement_path, "Agreement JSON")->required();
  compute_cmd->add_option("reading", reading_path, "Signed reading JSON")->required();
  compute_cmd->add_option("--policy", policy_path, "Reward policy JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (*serve_cmd) return serve(serve_args);
    if (*sim_run_cmd) return sim_run(scenario_path, sim_seed, report_out);
    if (*verify_cmd) return ledger_verify(log_path, verify_seed, keys_file);
    if (*compute_cmd) return invoice_compute(agreement_path, reading_path, policy_path);
  } catch (const ScenarioInvalid& e) {
    std::cerr << "emarket: " << e.what() << "\n";
    return kValidation;
  } catch (const ConfigInvalid& e) {
    std::cerr << "emarket: config: " << e.what() << "\n";
    return kValidation;
  } catch (const ledger::LedgerError& e) {
    std::cerr << "emarket: ledger: " << e.what() << "\n";
    return e.code() == ledger::LedgerErrc::Corrupt ? kValidation : kRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "emarket: " << e.what() << "\n";
    return kValidation;
  } catch (const agreements::AgreementError& e) {
    std::cerr << "emarket: " << e.what() << "\n";
    return kValidation;
  } catch (const settlement::SettlementError& e) {
    std::cerr << "emarket: " << e.what() << "\n";
    return kValidation;
  } catch (const metering::MeteringError& e) {
    std::cerr << "emarket: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "emarket: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}

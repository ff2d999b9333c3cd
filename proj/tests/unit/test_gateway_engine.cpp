#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/gateway_fixture.hpp"

using namespace emarket;
using namespace emarket::testing;
using gateway::Engine;

namespace {

struct Flow {
  DeviceId device;
  Hash256 agreement;
};

metering::MeterReading reading(Engine& e, const DeviceId& device, std::uint64_t period) {
  metering::ReadingFields f;
  f.device_id = device;
  f.period_id = period;
  f.generated_wh = {{metering::Source::Solar, 420000}, {metering::Source::Wind, 30000}};
  f.consumed_wh = 350000;
  f.exported_wh = 130000;
  return e.simulate_reading(f);
}

Flow setup(Engine& e) {
  for (auto [who, role] : {std::pair{"olivia", "Owner"}, {"carl", "Consumer"}, {"gina", "GridOperator"}})
    e.register_user(marketplace::UserProfile::from_json(user_body(who, role)));
  auto view = e.provision_device("meter-fw-1.0", "carl-house");
  auto l = e.post_listing(marketplace::Listing::from_json(listing_body()));
  auto r = e.post_request(marketplace::Request::from_json(request_body()));
  auto a = e.accept_match(l.listing_id, r.request_id);
  e.sign_agreement(a.agreement_id, "olivia", std::nullopt);
  e.sign_agreement(a.agreement_id, "carl", std::nullopt);
  e.sign_agreement(a.agreement_id, "gina", std::nullopt);
  return {view.device.device_id, a.agreement_id};
}

Json snapshot(const Engine& e) {
  Json j;
  j["head"] = e.ledger().head().hex();
  j["height"] = e.ledger().height();
  for (const auto& b : e.balances()) j["balances"].push_back(b.to_json());
  for (const auto& a : e.agreements()) j["agreements"].push_back(a.to_json());
  for (const auto& i : e.invoices(std::nullopt, std::nullopt)) j["invoices"].push_back(i.to_json());
  for (const char* who : {"olivia", "carl", "gina"})
    if (auto u = e.user(who)) j["users"].push_back(u->to_json());
  j["listings"] = Json::array();
  for (const auto& l : e.search(std::nullopt, std::nullopt)) j["listings"].push_back(l.to_json());
  return j;
}

std::int64_t cash_total(const Engine& e) {
  std::int64_t t = 0;
  for (const auto& b : e.balances()) t += b.cash_c;
  return t;
}

gateway::ServiceConfig dir_config(const TempDir& dir) {
  auto c = fast_config();
  c.data_dir = dir.str();
  return c;
}

void append_raw(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::app);
  f << bytes;
}

}  // namespace

TEST_CASE("restart restores the full state") {
  TempDir dir;
  Json before;
  Flow flow;
  {
    Engine e(dir_config(dir));
    flow = setup(e);
    e.submit_reading(reading(e, flow.device, 1));
    e.rate("carl", flow.agreement, 1, 4);
    before = snapshot(e);
    CHECK(before["invoices"].size() == 1);
  }
  Engine e(dir_config(dir));
  CHECK(snapshot(e) == before);

  // Sequence numbers, periods and ids continue where they stopped.
  auto out = e.submit_reading(reading(e, flow.device, 2));
  CHECK(out.ingest.accepted);
  REQUIRE(out.invoice);
  CHECK(out.invoice->status == settlement::InvoiceStatus::Paid);
  auto again = e.post_request(marketplace::Request::from_json(request_body("carl", "annex")));
  CHECK(again.request_id == "R000002");
  CHECK(cash_total(e) == 0);
}

TEST_CASE("torn tails in both logs are dropped on restart") {
  TempDir dir;
  Json before;
  Flow flow;
  {
    Engine e(dir_config(dir));
    flow = setup(e);
    e.submit_reading(reading(e, flow.device, 1));
    before = snapshot(e);
  }
  append_raw(dir.path / "store.jsonl", R"({"ops":[{"id":"x","record":{"acc)");
  append_raw(dir.path / "ledger.jsonl", R"({"header":{"height":9)");
  {
    Engine e(dir_config(dir));
    CHECK(snapshot(e) == before);
    auto out = e.submit_reading(reading(e, flow.device, 2));
    REQUIRE(out.invoice);
    before = snapshot(e);
  }
  Engine e(dir_config(dir));
  CHECK(snapshot(e) == before);
  CHECK(before["invoices"].size() == 2);
}

TEST_CASE("losing the last store line leaves a consistent earlier state") {
  TempDir dir;
  Flow flow;
  Json after_first;
  {
    Engine e(dir_config(dir));
    flow = setup(e);
    e.submit_reading(reading(e, flow.device, 1));
    after_first = snapshot(e);
    e.submit_reading(reading(e, flow.device, 2));
  }
  // Crash between the block append and the store line of the last operation.
  auto lines = JsonlFile::load((dir.path / "store.jsonl").string());
  std::filesystem::remove(dir.path / "store.jsonl");
  JsonlFile store((dir.path / "store.jsonl").string());
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) store.append(lines[i]);

  Engine e(dir_config(dir));
  CHECK(cash_total(e) == 0);
  for (const auto& inv : e.invoices(std::nullopt, std::nullopt)) CHECK(e.agreement(inv.agreement_id));
  // The ledger kept its blocks; the store is at or past the first period.
  CHECK(e.ledger().height() >= after_first["height"].get<std::int64_t>());
  CHECK(e.invoices(std::nullopt, std::nullopt).size() >= 1);
}

TEST_CASE("a refused payment leaves balances untouched and breaches the agreement") {
  Engine e(fast_config());
  auto flow = setup(e);
  auto before = e.balances();
  auto out = e.submit_reading(reading(e, flow.device, 1), false);
  REQUIRE(out.invoice);
  CHECK(out.invoice->status == settlement::InvoiceStatus::Unpaid);
  Json a = Json::array(), b = Json::array();
  for (const auto& x : before) a.push_back(x.to_json());
  for (const auto& x : e.balances()) b.push_back(x.to_json());
  CHECK(a == b);
  auto ag = e.agreement(flow.agreement);
  CHECK(ag->state == agreements::AgreementState::Breached);
  CHECK(ag->periods_elapsed == 0);
  CHECK(ag->breach_invoice == out.invoice->invoice_id);
  auto next = e.submit_reading(reading(e, flow.device, 2));
  CHECK(next.ingest.accepted);
  CHECK_FALSE(next.invoice);
}

TEST_CASE("a reading for a period other than the current one is not settled") {
  Engine e(fast_config());
  auto flow = setup(e);
  auto out = e.submit_reading(reading(e, flow.device, 2));
  CHECK(out.ingest.accepted);
  CHECK_FALSE(out.invoice);
  CHECK_FALSE(out.settlement.empty());
}

TEST_CASE("the persisted block log verifies with derived custodial keys") {
  TempDir dir;
  {
    Engine e(dir_config(dir));
    auto flow = setup(e);
    e.submit_reading(reading(e, flow.device, 1));
  }
  auto blocks = ledger::BlockLog::load((dir.path / "ledger.jsonl").string());
  REQUIRE(!blocks.empty());
  ledger::KeyDirectory keys;
  for (const auto& b : blocks)
    for (const auto& tx : b.txs)
      if (!keys.contains(tx.author))
        keys.register_key(tx.author, ledger::derive_account_key(tx.author, "emarket/1").public_key());
  if (!blocks.front().is_genesis()) blocks.insert(blocks.begin(), ledger::make_genesis());
  CHECK(static_cast<bool>(ledger::verify_chain(blocks, keys)));

  // A flipped amount breaks verification.
  for (auto& b : blocks)
    for (auto& tx : b.txs)
      if (tx.kind == ledger::TxKind::Payment) {
        tx.payload["amount_c"] = tx.payload["amount_c"].get<std::int64_t>() + 1;
        CHECK_FALSE(static_cast<bool>(ledger::verify_chain(blocks, keys)));
        return;
      }
  FAIL("no payment transaction found");
}

TEST_CASE("config layers: defaults < file < environment < flags") {
  using gateway::resolve_config;
  auto d = resolve_config(std::nullopt, {}, Json::object());
  CHECK(d.port == 8080);
  CHECK(d.difficulty_bits == 8);
  CHECK(d.host == "127.0.0.1");

  Json file = {{"port", 9000}, {"difficulty_bits", 12}, {"host", "0.0.0.0"}, {"policy", {{"diversity_bonus_pct", 40}}}};
  auto f = resolve_config(file, {}, Json::object());
  CHECK(f.port == 9000);
  CHECK(f.difficulty_bits == 12);
  CHECK(f.policy.diversity_bonus_pct == 40);
  CHECK(f.policy.base_mt_per_mwh == settlement::RewardPolicy{}.base_mt_per_mwh);

  std::map<std::string, std::string> env{{"EMARKET_PORT", "9100"},
                                         {"EMARKET_DIFFICULTY_BITS", "10"},
                                         {"EMARKET_FIRMWARE", "a,b"},
                                         {"UNRELATED", "x"}};
  auto e = resolve_config(file, env, Json::object());
  CHECK(e.port == 9100);
  CHECK(e.difficulty_bits == 10);
  CHECK(e.host == "0.0.0.0");
  CHECK(e.firmware == std::vector<std::string>{"a", "b"});

  auto c = resolve_config(file, env, {{"port", 9200}});
  CHECK(c.port == 9200);
  CHECK(c.difficulty_bits == 10);

  CHECK_THROWS_AS(resolve_config(Json{{"prot", 1}}, {}, Json::object()), gateway::ConfigInvalid);
  CHECK_THROWS_AS(resolve_config(std::nullopt, {{"EMARKET_PORT", "80a"}}, Json::object()), gateway::ConfigInvalid);
  CHECK_THROWS_AS(resolve_config(std::nullopt, {}, {{"port", 70000}}), gateway::ConfigInvalid);
  CHECK_THROWS_AS(resolve_config(std::nullopt, {}, {{"confirm_timeout", 0}}), gateway::ConfigInvalid);
  CHECK_THROWS_AS(resolve_config(std::nullopt, {}, {{"firmware", Json::array()}}), gateway::ConfigInvalid);
}

TEST_CASE("a configured manufacturer root disables built-in provisioning") {
  auto c = fast_config();
  c.root_pubkey = crypto::SigningKey::from_seed(crypto::derive("someone-else", "root")).public_key();
  Engine e(c);
  CHECK_THROWS_AS(e.provision_device("meter-fw-1.0", "p"), gateway::BadRequest);
}

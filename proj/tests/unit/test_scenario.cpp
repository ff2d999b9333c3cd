#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "emarket/gateway/scenario.hpp"

using namespace emarket;
using namespace emarket::gateway;

namespace {

const std::string kRoot = EMARKET_SOURCE_DIR;

Json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return Json::parse(ss.str());
}

Json basic() { return read_json(kRoot + "/scenarios/lease_rebate_basic.json"); }

std::string invalid_field(const Json& j) {
  try {
    parse_scenario(j);
  } catch (const ScenarioInvalid& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("bundled scenarios match their pinned reports") {
  for (const char* name : {"lease_rebate_basic", "rent_to_own_partition", "mixed_market"}) {
    CAPTURE(name);
    auto report = run_scenario(load_scenario(kRoot + "/scenarios/" + name + ".json"));
    CHECK(report == read_json(kRoot + "/tests/golden/" + name + ".report.json"));
  }
}

TEST_CASE("rent-to-own across a partition transfers ownership after four paid periods") {
  auto r = run_scenario(load_scenario(kRoot + "/scenarios/rent_to_own_partition.json"));
  const auto& a = r["agreements"]["priya-rto"];
  CHECK(a["state"] == "Completed");
  CHECK(a["ownership_transferred"] == true);
  std::int64_t installments = 0;
  for (const auto& inv : r["invoices"])
    for (const auto& l : inv["line_items"])
      if (l["label"] == "installment") installments += l["amount_c"].get<std::int64_t>();
  CHECK(installments == 4 * 15000);
  for (const auto& h : r["node_heads"]) CHECK(h == r["head"]["hash"]);
}

TEST_CASE("mixed market: refusal breaches, termination stops billing") {
  auto r = run_scenario(load_scenario(kRoot + "/scenarios/mixed_market.json"));
  CHECK(r["agreements"]["dina-olivia"]["state"] == "Breached");
  CHECK(r["agreements"]["carl-direct"]["state"] == "Terminated");
  CHECK(r["agreements"]["carl-direct"]["periods_elapsed"] == 2);
  CHECK(r["cash_total_c"] == 0);
  int unpaid = 0;
  for (const auto& inv : r["invoices"]) unpaid += inv["status"] == "Unpaid";
  CHECK(unpaid == 1);
}

TEST_CASE("scenario runs are byte-identical and seed-sensitive") {
  auto s = parse_scenario(basic());
  auto a = run_scenario(s).dump();
  auto b = run_scenario(s).dump();
  CHECK(a == b);
  auto other = run_scenario(s, 8);
  CHECK(other["seed"] == 8);
  CHECK(other.dump() != a);
  // Settlement does not depend on the network seed.
  auto r = Json::parse(a);
  CHECK(other["balances"] == r["balances"]);
  CHECK(other["cash_total_c"] == 0);
}

TEST_CASE("report invariants: conservation and converged heads") {
  auto r = run_scenario(parse_scenario(basic()));
  std::int64_t cash = 0, tokens = 0;
  for (const auto& b : r["balances"]) {
    cash += b["cash_c"].get<std::int64_t>();
    tokens += b["tokens_mt"].get<std::int64_t>();
  }
  CHECK(cash == 0);
  CHECK(tokens == r["token_total_mt"].get<std::int64_t>());
  for (const auto& h : r["node_heads"]) CHECK(h == r["head"]["hash"]);
  CHECK(r["agreements"]["carl-lease"]["state"] == "Completed");
  for (const auto& inv : r["invoices"]) CHECK(inv["status"] == "Paid");
}

TEST_CASE("dangling references name the offending field") {
  auto j = basic();
  j["periods"][0]["readings"][0]["device"] = "ghost";
  CHECK(invalid_field(j) == "/periods/0/readings/0/device");

  j = basic();
  j["agreements"][0]["listing"] = "nope";
  CHECK(invalid_field(j) == "/agreements/0/listing");

  j = basic();
  j["listings"][0]["owner"] = "stranger";
  CHECK(invalid_field(j) == "/listings/0/owner");

  j = basic();
  j["periods"][1]["period"] = 5;
  CHECK(invalid_field(j).rfind("/periods/1", 0) == 0);

  j = basic();
  j["mining"][0]["node"] = 0;
  CHECK(invalid_field(j).rfind("/mining/0", 0) == 0);

  j = basic();
  j["users"][0]["roles"] = {"Landlord"};
  CHECK(invalid_field(j).rfind("/users/0", 0) == 0);

  CHECK(invalid_field(basic()) == "<accepted>");
}

TEST_CASE("syntax errors report the line") {
  auto path = std::filesystem::temp_directory_path() / "emarket-bad-scenario.json";
  {
    std::ofstream f(path);
    f << "{\n  \"name\": \"x\",\n  \"users\": [\n    {\"account\": \"a\",,}\n  ]\n}\n";
  }
  try {
    load_scenario(path.string());
    FAIL("expected ScenarioInvalid");
  } catch (const ScenarioInvalid& e) {
    REQUIRE(e.line());
    CHECK(*e.line() == 4);
  }
  std::filesystem::remove(path);
  CHECK_THROWS(load_scenario("/nonexistent/scenario.json"));
}

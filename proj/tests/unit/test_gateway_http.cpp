#include <set>
#include <thread>

#include "doctest.h"
#include "support/gateway_fixture.hpp"

using namespace emarket;
using namespace emarket::testing;

namespace {

// Users, device, listing, request: everything up to the match.
struct Prepared {
  std::string device_hex;
  std::string listing_id;
  std::string request_id;
};

Prepared prepare(httplib::Client& c) {
  for (auto [who, role] : {std::pair{"olivia", "Owner"}, {"carl", "Consumer"}, {"gina", "GridOperator"}})
    REQUIRE(http_post(c, "/v1/users", user_body(who, role)).status == 201);
  auto dev = http_post(c, "/v1/devices", {{"firmware", "meter-fw-1.0"}, {"premises_id", "carl-house"}});
  REQUIRE(dev.status == 201);
  auto listing = http_post(c, "/v1/listings", listing_body());
  REQUIRE(listing.status == 201);
  auto request = http_post(c, "/v1/requests", request_body());
  REQUIRE(request.status == 201);
  return {dev.body["device"]["device_id"], listing.body["listing_id"], request.body["request_id"]};
}

std::string sign_all(httplib::Client& c, const std::string& listing_id, const std::string& request_id) {
  auto a = http_post(c, "/v1/agreements", {{"listing_id", listing_id}, {"request_id", request_id}});
  REQUIRE(a.status == 201);
  std::string id = a.body["agreement_id"];
  CHECK(a.body["state"] == "Draft");
  for (const char* party : {"olivia", "carl", "gina"})
    REQUIRE(http_post(c, "/v1/agreements/" + id + "/sign", {{"party", party}}).status == 200);
  auto got = http_get(c, "/v1/agreements/" + id);
  REQUIRE(got.status == 200);
  CHECK(got.body["state"] == "Active");
  return id;
}

}  // namespace

TEST_CASE("health and a fresh ledger head") {
  LiveServer s;
  REQUIRE(s.port > 0);
  auto c = s.client();
  for (const char* path : {"/healthz", "/v1/healthz"}) {
    auto r = http_get(c, path);
    CHECK(r.status == 200);
    CHECK(r.body == Json{{"status", "ok"}});
  }
  auto head = http_get(c, "/v1/ledger/head");
  CHECK(head.status == 200);
  CHECK(head.body["height"] == 0);
  CHECK(head.body["hash"] == ledger::make_genesis().hash().hex());
  auto g = http_get(c, "/v1/ledger/blocks/" + head.body["hash"].get<std::string>());
  CHECK(g.status == 200);
  CHECK(g.body["height"] == 0);
}

TEST_CASE("lease flow over HTTP ends with a retrievable paid invoice") {
  LiveServer s;
  auto c = s.client();
  auto p = prepare(c);

  auto search = http_get(c, "/v1/listings?region=KL&source=solar");
  REQUIRE(search.status == 200);
  REQUIRE(search.body["listings"].size() == 1);
  auto m = http_get(c, "/v1/matches?request_id=" + p.request_id);
  REQUIRE(m.status == 200);
  REQUIRE(m.body["matches"].size() == 1);
  CHECK(m.body["matches"][0]["listing_id"] == p.listing_id);

  auto id = sign_all(c, p.listing_id, p.request_id);

  auto r = http_post(c, "/v1/readings", reading_body(p.device_hex, 1));
  REQUIRE(r.status == 201);
  CHECK(r.body["accepted"] == true);
  REQUIRE(r.body.contains("invoice"));
  CHECK(r.body["invoice"]["status"] == "Paid");
  CHECK(r.body["reading"]["sequence"] == 1);

  auto inv = http_get(c, "/v1/invoices?account=carl&period=1");
  REQUIRE(inv.status == 200);
  REQUIRE(inv.body["invoices"].size() == 1);
  const auto& invoice = inv.body["invoices"][0];
  CHECK(invoice["agreement_id"] == id);
  // 350 kWh at 12 c; 10 % rebate; 130 kWh surplus at 8 c split 5 % grid, then 30/70.
  std::map<std::string, std::int64_t> lines;
  for (const auto& l : invoice["line_items"]) lines[l["label"]] = l["amount_c"];
  CHECK(lines["energy_charge"] == 4200);
  CHECK(lines["rebate"] == 420);
  CHECK(lines["surplus_grid_fee"] == 52);
  CHECK(lines["surplus_consumer_share"] == 296);
  CHECK(lines["surplus_owner_share"] == 692);

  auto carl = http_get(c, "/v1/users/carl");
  REQUIRE(carl.status == 200);
  CHECK(carl.body["cash_c"] == -4200 + 420 + 296);
  CHECK(http_get(c, "/v1/users/olivia").body["cash_c"] == 4200 - 420 + 692);
  CHECK(http_get(c, "/v1/users/gina").body["cash_c"] == 52);

  auto rating = http_post(c, "/v1/ratings", {{"rater", "carl"}, {"agreement_id", id}, {"period_id", 1}, {"stars", 5}});
  CHECK(rating.status == 201);
  CHECK(rating.body["average_x10"] == 50);

  auto tokens = http_get(c, "/v1/users/olivia").body["tokens_mt"].get<std::int64_t>();
  CHECK(tokens > 0);
  auto redeem = http_post(c, "/v1/tokens/redeem", {{"account", "olivia"}, {"amount_mt", 100}, {"mode", "Cash"}});
  CHECK(redeem.status == 200);
  CHECK(redeem.body["amount_c"] == 1);
  CHECK(redeem.body["balance"]["tokens_mt"] == tokens - 100);

  auto head = http_get(c, "/v1/ledger/head");
  CHECK(head.body["height"].get<std::int64_t>() > 0);
}

TEST_CASE("error envelopes carry the mapped status and code") {
  LiveServer s;
  auto c = s.client();
  auto p = prepare(c);

  auto expect = [&](const Reply& r, int status, const std::string& code) {
    CHECK(r.status == status);
    CHECK(r.body["code"] == code);
    CHECK(r.body["message"].is_string());
  };
  expect(http_get(c, "/v1/users/nobody"), 404, "UnknownUser");
  expect(http_get(c, "/v1/agreements/" + std::string(64, 'a')), 404, "UnknownAgreement");
  expect(http_get(c, "/v1/ledger/blocks/" + std::string(64, 'b')), 404, "NotFound");
  expect(http_get(c, "/v1/matches?request_id=R999999"), 404, "UnknownRequest");
  expect(http_get(c, "/v1/matches"), 400, "InvalidFields");
  expect(to_reply(c.Post("/v1/users", "{not json", "application/json")), 400, "MalformedJson");
  expect(http_post(c, "/v1/users", user_body("olivia", "Owner")), 409, "DuplicateUser");
  expect(http_post(c, "/v1/users", user_body("treasury", "Owner")), 409, "ReservedAccount");
  expect(http_post(c, "/v1/requests", request_body("olivia")), 403, "WrongRole");
  expect(http_post(c, "/v1/tokens/redeem", {{"account", "carl"}, {"amount_mt", 5}}), 422, "InsufficientTokens");
  expect(http_post(c, "/v1/devices", {{"firmware", "evil-fw"}, {"premises_id", "x"}}), 403, "UnknownFirmware");

  // No active agreement yet: the reading is accepted but not settled.
  auto r = http_post(c, "/v1/readings", reading_body(p.device_hex, 1));
  CHECK(r.status == 201);
  CHECK_FALSE(r.body.contains("invoice"));
  auto replay = r.body["reading"];
  expect(http_post(c, "/v1/readings", replay), 409, "SequenceReplay");
  auto forged = replay;
  forged["sequence"] = 2;
  forged["consumed_wh"] = 1;
  expect(http_post(c, "/v1/readings", forged), 403, "BadSignature");

  sign_all(c, p.listing_id, p.request_id);
  REQUIRE(http_post(c, "/v1/requests", request_body("carl", "carl-annex")).status == 201);
  expect(http_post(c, "/v1/agreements", {{"listing_id", p.listing_id}, {"request_id", "R000002"}}), 409, "RaceLost");
}

TEST_CASE("concurrent accepts of one listing produce a single agreement") {
  LiveServer s;
  auto c = s.client();
  auto p = prepare(c);
  constexpr int kRequests = 8;
  std::vector<std::string> ids{p.request_id};
  for (int i = 1; i < kRequests; ++i) {
    auto r = http_post(c, "/v1/requests", request_body("carl", "site-" + std::to_string(i)));
    REQUIRE(r.status == 201);
    ids.push_back(r.body["request_id"]);
  }
  std::vector<int> status(kRequests);
  std::vector<std::thread> threads;
  for (int i = 0; i < kRequests; ++i)
    threads.emplace_back([&, i] {
      auto cl = s.client();
      status[i] = http_post(cl, "/v1/agreements", {{"listing_id", p.listing_id}, {"request_id", ids[i]}}).status;
    });
  for (auto& t : threads) t.join();
  int created = 0;
  for (int st : status) {
    CHECK((st == 201 || st == 409));
    created += st == 201;
  }
  CHECK(created == 1);
  CHECK(s.engine.agreements().size() == 1);
}

TEST_CASE("concurrent registrations and reads stay consistent") {
  LiveServer s;
  constexpr int kThreads = 6, kEach = 10;
  std::vector<std::thread> threads;
  std::atomic<int> created{0};
  for (int t = 0; t < kThreads; ++t)
    threads.emplace_back([&, t] {
      auto c = s.client();
      for (int i = 0; i < kEach; ++i) {
        auto name = "u" + std::to_string(t) + "-" + std::to_string(i);
        created += http_post(c, "/v1/users", user_body(name, "Consumer")).status == 201;
        http_get(c, "/v1/ledger/head");
        // Everyone also races on one shared name.
        http_post(c, "/v1/users", user_body("shared", "Owner"));
      }
    });
  for (auto& t : threads) t.join();
  CHECK(created == kThreads * kEach);
  auto c = s.client();
  CHECK(http_get(c, "/v1/users/shared").status == 200);
  for (int t = 0; t < kThreads; ++t)
    for (int i = 0; i < kEach; ++i) {
      auto name = "u" + std::to_string(t) + "-" + std::to_string(i);
      auto u = http_get(c, "/v1/users/" + name);
      CHECK(u.status == 200);
      CHECK(u.body["public_key"].is_string());
    }
}

TEST_CASE("HTTP and direct engine calls reach the same ledger head") {
  LiveServer s;
  auto c = s.client();
  auto p = prepare(c);
  sign_all(c, p.listing_id, p.request_id);
  for (std::uint64_t period = 1; period <= 2; ++period)
    REQUIRE(http_post(c, "/v1/readings", reading_body(p.device_hex, period)).status == 201);

  gateway::Engine direct(fast_config());
  for (auto [who, role] : {std::pair{"olivia", "Owner"}, {"carl", "Consumer"}, {"gina", "GridOperator"}})
    direct.register_user(marketplace::UserProfile::from_json(user_body(who, role)));
  auto view = direct.provision_device("meter-fw-1.0", "carl-house");
  CHECK(view.device.device_id.hex() == p.device_hex);
  auto l = direct.post_listing(marketplace::Listing::from_json(listing_body()));
  auto r = direct.post_request(marketplace::Request::from_json(request_body()));
  auto a = direct.accept_match(l.listing_id, r.request_id);
  direct.sign_agreement(a.agreement_id, "olivia", std::nullopt);
  direct.sign_agreement(a.agreement_id, "carl", std::nullopt);
  direct.sign_agreement(a.agreement_id, "gina", std::nullopt);
  for (std::uint64_t period = 1; period <= 2; ++period) {
    metering::ReadingFields f;
    f.device_id = view.device.device_id;
    f.period_id = period;
    f.generated_wh = {{metering::Source::Solar, 420000}};
    f.consumed_wh = 350000;
    f.exported_wh = 130000;
    direct.submit_reading(direct.simulate_reading(f));
  }

  CHECK(direct.ledger().head() == s.engine.ledger().head());
  CHECK(direct.ledger().height() == s.engine.ledger().height());
  Json a_bal = Json::array(), b_bal = Json::array();
  for (const auto& b : direct.balances()) a_bal.push_back(b.to_json());
  for (const auto& b : s.engine.balances()) b_bal.push_back(b.to_json());
  CHECK(a_bal == b_bal);
}

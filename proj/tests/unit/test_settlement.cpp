#include <random>
#include <set>

#include "doctest.h"
#include "emarket/settlement/settlement.hpp"
#include "support/recording_ledger.hpp"
#include "support/settlement_cases.hpp"

using namespace emarket;
using namespace emarket::settlement;
using emarket::testing::RecordingLedger;
namespace t = emarket::testing;

namespace {

std::int64_t line(const Invoice& inv, const std::string& label) {
  for (const auto& l : inv.line_items)
    if (l.label == label) return l.amount_c;
  FAIL("missing line " << label);
  return -1;
}

ReadingFields mix(std::initializer_list<std::pair<metering::Source, std::int64_t>> gen) {
  ReadingFields r;
  for (auto [s, v] : gen) r.generated_wh[s] = v;
  return r;
}

}  // namespace

TEST_CASE("worked settlement examples") {
  RewardPolicy policy;

  SUBCASE("lease rebate: 100 kWh at 10c with 10% rebate") {
    auto a = t::engine_agreement(t::lease(10, 1000));
    auto r = t::engine_reading(t::solar_meter(0, 100000, 0));
    auto inv = settle_period(a, &r, policy);
    CHECK(line(inv, "energy_charge") == 1000);
    CHECK(line(inv, "rebate") == 100);
    auto d = inv.deltas();
    CHECK(d["consumer"] == -900);
    CHECK(d["owner"] == 900);
  }

  SUBCASE("zero consumption and export still conserves") {
    auto a = t::engine_agreement(t::lease(10, 1000, 2000, 8, 500, true));
    auto r = t::engine_reading(t::solar_meter(0, 0, 0));
    auto inv = settle_period(a, &r, policy);
    CHECK(inv.line_items.size() == 5);
    for (const auto& l : inv.line_items) CHECK(l.amount_c == 0);
    CHECK(inv.token_awards.empty());
  }

  SUBCASE("surplus: 50 kWh at 8c, 5% grid fee, 20% consumer split") {
    auto a = t::engine_agreement(t::lease(10, 1000, 2000, 8, 500, true));
    auto r = t::engine_reading(t::solar_meter(60000, 0, 50000));
    auto inv = settle_period(a, &r, policy);
    CHECK(line(inv, "surplus_grid_fee") == 20);
    CHECK(line(inv, "surplus_consumer_share") == 76);
    CHECK(line(inv, "surplus_owner_share") == 304);
    CHECK(inv.deltas()["market"] == -400);
  }

  SUBCASE("rent-to-own adds the installment") {
    auto a = t::engine_agreement(t::rent_to_own(12, 15000));
    auto r = t::engine_reading(t::solar_meter(0, 250000, 0));
    auto inv = settle_period(a, &r, policy);
    CHECK(line(inv, "energy_charge") == 3000);
    CHECK(line(inv, "installment") == 15000);
  }

  SUBCASE("direct sale bills exported energy up to the cap") {
    auto a = t::engine_agreement(t::direct(9, 100));
    auto r = t::engine_reading(t::solar_meter(200000, 0, 150000));
    CHECK(line(settle_period(a, &r, policy), "energy_charge") == 900);
  }
}

TEST_CASE("reward worked examples") {
  RewardPolicy p;
  CHECK(compute_reward(mix({{metering::Source::Solar, 1000000}}), p) == 1000);
  CHECK(compute_reward(mix({{metering::Source::Solar, 500000}, {metering::Source::Wind, 500000}}), p) == 1100);
  CHECK(compute_reward(mix({{metering::Source::Diesel, 1000000}}), p) == 0);
  CHECK(compute_reward(mix({}), p) == 0);
  // 10% is the qualifying share; crossing it changes the multiplier
  CHECK(reward_multiplier_pct(mix({{metering::Source::Solar, 900000}, {metering::Source::Wind, 100000}}), p) == 110);
  CHECK(reward_multiplier_pct(mix({{metering::Source::Solar, 900001}, {metering::Source::Wind, 100000}}), p) == 100);
  RewardPolicy capped{1000, 30, 150, 1000};
  auto four = mix({{metering::Source::Solar, 1}, {metering::Source::Wind, 1}, {metering::Source::Hydro, 1},
                   {metering::Source::Biomass, 1}});
  CHECK(reward_multiplier_pct(four, capped) == 150);
}

TEST_CASE("engine matches the brute-force oracle on scripted scenarios") {
  auto cases = t::settlement_cases();
  CHECK(cases.size() >= 20);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto a = t::engine_agreement(c.terms);
    auto r = t::engine_reading(c.meter);
    auto inv = settle_period(a, &r, t::engine_policy(c.policy));
    CHECK(t::same_outcome(t::engine_outcome(inv), t::oracle::settle(c.terms, c.meter, c.policy)));
  }
}

TEST_CASE("oracle rounding agrees with hand values") {
  using t::oracle::round_half_up;
  CHECK(round_half_up(5, 10) == 1);
  CHECK(round_half_up(4, 10) == 0);
  CHECK(round_half_up(15, 10) == 2);
  CHECK(round_half_up(25, 10) == 3);
  CHECK(round_half_up(0, 7) == 0);
  CHECK(round_half_up(7, 7) == 1);
}

TEST_CASE("settlement properties over random inputs") {
  std::mt19937_64 rng(11);
  auto u = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (int i = 0; i < 500; ++i) {
    t::oracle::Terms terms;
    switch (u(0, 2)) {
      case 0: terms = t::lease(u(0, 60), u(0, 10000), u(0, 10000), u(0, 40), u(0, 10000), true); break;
      case 1: terms = t::rent_to_own(u(0, 60), u(0, 100000)); break;
      default: terms = t::direct(u(0, 60), u(0, 5000), u(0, 10000), u(0, 1) == 1); break;
    }
    if (!terms.has_grid) terms.grid_bp = 0;
    t::oracle::Meter m;
    for (auto& g : m.gen) g = u(0, 3) == 0 ? 0 : u(0, 2000000);
    m.consumed = u(0, 3000000);
    std::int64_t total = 0;
    for (auto g : m.gen) total += g;
    m.exported = u(0, total);

    auto a = t::engine_agreement(terms);
    auto r = t::engine_reading(m);
    auto inv = settle_period(a, &r, RewardPolicy{});
    std::int64_t sum = 0;
    for (const auto& [who, d] : inv.deltas()) sum += d;
    CHECK(sum == 0);
    for (const auto& l : inv.line_items) CHECK(l.amount_c >= 0);
    if (terms.kind == "lease") {
      auto gross = t::oracle::round_half_up(t::oracle::i128(m.exported) * terms.surplus_tariff, 1000);
      CHECK(line(inv, "surplus_grid_fee") + line(inv, "surplus_consumer_share") + line(inv, "surplus_owner_share") ==
            gross);
    }
    CHECK(t::same_outcome(t::engine_outcome(inv), t::oracle::settle(terms, m, {})));
  }
}

TEST_CASE("diversity: splitting a total over two qualifying sources never lowers the reward") {
  std::mt19937_64 rng(5);
  RewardPolicy p;
  for (int i = 0; i < 300; ++i) {
    std::int64_t total = std::uniform_int_distribution<std::int64_t>(10, 5000000)(rng);
    std::int64_t part = std::uniform_int_distribution<std::int64_t>(total / 10 + 1, total - total / 10 - 1)(rng);
    auto single = compute_reward(mix({{metering::Source::Solar, total}}), p);
    auto split = compute_reward(mix({{metering::Source::Solar, part}, {metering::Source::Hydro, total - part}}), p);
    CHECK(split >= single);
  }
}

TEST_CASE("settle_period preconditions") {
  auto a = t::engine_agreement(t::lease(10, 1000));
  auto r = t::engine_reading(t::solar_meter(0, 1000, 0));
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const SettlementError& e) {
      return e.code();
    }
    FAIL("no SettlementError");
    return SettlementErrc::UnknownInvoice;
  };
  CHECK(code([&] { settle_period(a, nullptr, {}); }) == SettlementErrc::MissingReading);
  auto wrong = t::engine_reading(t::solar_meter(0, 1000, 0), 2);
  CHECK(code([&] { settle_period(a, &wrong, {}); }) == SettlementErrc::PeriodMismatch);
  a.state = agreements::AgreementState::Draft;
  CHECK(code([&] { settle_period(a, &r, {}); }) == SettlementErrc::NotActive);
}

TEST_CASE("invoice json round trip and id") {
  auto a = t::engine_agreement(t::lease(10, 1000, 2000, 8, 500, true));
  auto r = t::engine_reading(t::solar_meter(60000, 1000, 50000));
  auto inv = settle_period(a, &r, {});
  auto back = Invoice::from_json(inv.to_json());
  CHECK(back.invoice_id == inv.invoice_id);
  CHECK(back.line_items == inv.line_items);
  CHECK(back.token_awards == inv.token_awards);
  auto tampered = inv.to_json();
  tampered["line_items"][0]["amount_c"] = 1;
  CHECK_THROWS(Invoice::from_json(tampered));
}

TEST_CASE("energy credits become a treasury line on the next invoice") {
  AccountBook book;
  book.credit_tokens("consumer", 4000);
  CHECK(book.redeem_tokens("consumer", 2000, RedeemMode::EnergyCredit, 250) == 500);
  auto credits = book.take_credits({"owner", "consumer"});
  REQUIRE(credits.size() == 1);
  auto a = t::engine_agreement(t::lease(10, 0));
  auto r = t::engine_reading(t::solar_meter(0, 100000, 0));
  auto inv = settle_period(a, &r, {}, {}, credits);
  CHECK(line(inv, "energy_credit") == 500);
  CHECK(inv.deltas()["consumer"] == -500);
  CHECK(inv.deltas()["treasury"] == -500);
  CHECK(book.take_credits({"consumer"}).empty());
  book.return_credits(credits);
  CHECK(book.pending_credits().size() == 1);
}

TEST_CASE("redeem_tokens") {
  AccountBook book;
  book.credit_tokens("alice", 1500);
  CHECK(book.redeem_tokens("alice", 1000, RedeemMode::Cash, 500) == 500);
  CHECK(book.balance("alice").cash_c == 500);
  CHECK(book.balance("alice").tokens_mt == 500);
  CHECK(book.total_cash() == 0);
  CHECK(book.redeem_tokens("alice", 0, RedeemMode::Cash, 500) == 0);
  CHECK(book.balance("alice").tokens_mt == 500);
  try {
    book.redeem_tokens("alice", 501, RedeemMode::Cash, 500);
    FAIL("expected InsufficientTokens");
  } catch (const SettlementError& e) {
    CHECK(e.code() == SettlementErrc::InsufficientTokens);
  }
  CHECK(book.balance("alice").tokens_mt == 500);
}

TEST_CASE("settlement tracker") {
  RecordingLedger ledger;
  SettlementTracker tracker(ledger, 10);
  auto a = t::engine_agreement(t::rent_to_own(12, 15000));
  auto r = t::engine_reading(t::solar_meter(1000000, 250000, 0));
  auto inv = settle_period(a, &r, {});
  REQUIRE(inv.line_items.size() == 2);
  REQUIRE(inv.token_awards.size() == 1);

  SUBCASE("one Payment per line and one TokenIssue per award; Paid on confirmation") {
    auto posted = tracker.post(inv, 0);
    CHECK(ledger.count(ledger::TxKind::Payment) == 2);
    CHECK(ledger.count(ledger::TxKind::TokenIssue) == 1);
    std::set<Hash256> confirmed;
    auto is_confirmed = [&](const Hash256& h) { return confirmed.count(h) != 0; };
    CHECK(tracker.poll(1, is_confirmed).empty());
    confirmed.insert(posted.tx_ids.begin(), posted.tx_ids.end() - 1);
    CHECK(tracker.poll(2, is_confirmed).empty());
    confirmed.insert(posted.tx_ids.back());
    auto done = tracker.poll(3, is_confirmed);
    REQUIRE(done.size() == 1);
    CHECK(done[0].status == InvoiceStatus::Paid);
    CHECK(tracker.outstanding() == 0);
  }

  SUBCASE("halted ledger resolves Unpaid at the timeout") {
    tracker.post(inv, 5);
    auto never = [](const Hash256&) { return false; };
    CHECK(tracker.poll(14, never).empty());
    auto done = tracker.poll(15, never);
    REQUIRE(done.size() == 1);
    CHECK(done[0].status == InvoiceStatus::Unpaid);
  }

  SUBCASE("empty invoice is Paid at the first poll with no transactions") {
    Invoice empty;
    empty.invoice_id = canonical_hash(empty.body_json());
    auto posted = tracker.post(empty, 0);
    CHECK(posted.tx_ids.empty());
    CHECK(ledger.submitted.empty());
    auto done = tracker.poll(0, [](const Hash256&) { return false; });
    REQUIRE(done.size() == 1);
    CHECK(done[0].status == InvoiceStatus::Paid);
  }

  SUBCASE("unavailable ledger tracks nothing") {
    ledger.available = false;
    CHECK_THROWS_AS(tracker.post(inv, 0), ledger::LedgerError);
    CHECK(tracker.outstanding() == 0);
  }

  SUBCASE("refusal") {
    auto refused = tracker.refuse(inv);
    CHECK(refused.status == InvoiceStatus::Unpaid);
    CHECK(tracker.find(inv.invoice_id)->status == InvoiceStatus::Unpaid);
    CHECK(ledger.submitted.empty());
  }
}

TEST_CASE("account book conservation across paid invoices") {
  AccountBook book;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto a = t::engine_agreement(t::lease(rng() % 40, rng() % 10001, rng() % 10001, rng() % 20, rng() % 10001, true),
                                 "o" + std::to_string(rng() % 4), "c" + std::to_string(rng() % 4));
    auto r = t::engine_reading(t::solar_meter(100000, rng() % 500000, rng() % 100000));
    book.apply_paid(settle_period(a, &r, {}));
  }
  CHECK(book.total_cash() == 0);
  CHECK(book.total_tokens() > 0);
}

#pragma once

#include <string>
#include <vector>

#include "emarket/settlement/settlement.hpp"
#include "support/settlement_oracle.hpp"

namespace emarket::testing {

struct SettlementCase {
  std::string name;
  oracle::Terms terms;
  oracle::Meter meter;
  oracle::Policy policy;
};

inline oracle::Meter solar_meter(std::int64_t solar, std::int64_t consumed, std::int64_t exported) {
  oracle::Meter m;
  m.gen[0] = solar;
  m.consumed = consumed;
  m.exported = exported;
  return m;
}

inline oracle::Terms lease(std::int64_t tariff, std::int64_t rebate_bp, std::int64_t split_bp = 0,
                           std::int64_t surplus_tariff = 0, std::int64_t grid_bp = 0, bool grid = false) {
  return {"lease", tariff, rebate_bp, split_bp, surplus_tariff, grid_bp, 0, 0, grid};
}

inline oracle::Terms rent_to_own(std::int64_t tariff, std::int64_t installment) {
  return {"rto", tariff, 0, 0, 0, 0, installment, 0, false};
}

inline oracle::Terms direct(std::int64_t tariff, std::int64_t max_kwh, std::int64_t grid_bp = 0, bool grid = false) {
  return {"direct", tariff, 0, 0, 0, grid_bp, 0, max_kwh, grid};
}

// Hand-scripted scenarios: every agreement kind, zero inputs, rounding at
// and around the half-cent, caps, and large magnitudes.
inline std::vector<SettlementCase> settlement_cases() {
  std::vector<SettlementCase> c;
  c.push_back({"lease 100 kWh at 10c, 10% rebate", lease(10, 1000), solar_meter(0, 100000, 0), {}});
  c.push_back({"lease all zero", lease(10, 1000, 2000, 8), solar_meter(0, 0, 0), {}});
  c.push_back({"lease surplus 50 kWh at 8c, grid 5%, split 20%", lease(10, 1000, 2000, 8, 500, true),
               solar_meter(60000, 0, 50000), {}});
  c.push_back({"lease zero rebate", lease(12, 0), solar_meter(0, 77777, 0), {}});
  c.push_back({"lease full rebate", lease(12, 10000), solar_meter(0, 77777, 0), {}});
  c.push_back({"lease half cent rounds up", lease(500, 0), solar_meter(0, 1, 0), {}});
  c.push_back({"lease just under half cent rounds down", lease(499, 0), solar_meter(0, 1, 0), {}});
  c.push_back({"lease rebate rounding", lease(1, 3333), solar_meter(0, 15000, 0), {}});
  c.push_back({"lease odd surplus split, no grid", lease(10, 500, 5000, 7), solar_meter(9000, 500, 3001), {}});
  c.push_back({"lease large magnitudes", lease(10000, 1234, 4321, 9999, 777, true),
               solar_meter(2000000000000, 1000000000000, 999999999999), {}});
  c.push_back({"lease split all to consumer", lease(10, 1000, 10000, 9, 300, true), solar_meter(5000, 4000, 4999), {}});
  c.push_back({"lease grid takes everything", lease(10, 1000, 5000, 9, 10000, true), solar_meter(5000, 0, 4999), {}});
  c.push_back({"rent-to-own basic", rent_to_own(12, 15000), solar_meter(300000, 250000, 0), {}});
  c.push_back({"rent-to-own zero consumption", rent_to_own(12, 15000), solar_meter(0, 0, 0), {}});
  c.push_back({"rent-to-own zero installment", rent_to_own(12, 0), solar_meter(0, 1234, 0), {}});
  c.push_back({"rent-to-own energy rounds up", rent_to_own(1, 100), solar_meter(0, 1500, 0), {}});
  c.push_back({"direct below cap", direct(9, 100), solar_meter(50000, 0, 40000), {}});
  c.push_back({"direct above cap", direct(9, 100), solar_meter(200000, 0, 150000), {}});
  c.push_back({"direct zero cap", direct(9, 0), solar_meter(200000, 0, 150000), {}});
  c.push_back({"direct grid fee rounding", direct(7, 1000, 250, true), solar_meter(100000, 0, 12345), {}});
  c.push_back({"direct zero export", direct(7, 1000, 250, true), solar_meter(0, 5000, 0), {}});

  oracle::Meter three;
  three.gen = {600000, 300000, 100000, 0, 0, 0};
  c.push_back({"three qualifying sources", lease(10, 1000), three, {}});
  oracle::Meter diluted;
  diluted.gen = {500000, 0, 0, 0, 5000000, 0};
  c.push_back({"diesel dilutes the solar share", rent_to_own(5, 100), diluted, {}});
  oracle::Meter four;
  four.gen = {250000, 250000, 250000, 250000, 0, 0};
  c.push_back({"multiplier cap", direct(5, 10), four, {1000, 30, 150, 1000}});
  c.push_back({"1 MWh solar", lease(10, 1000), solar_meter(1000000, 0, 0), {}});
  oracle::Meter half_half;
  half_half.gen = {500000, 500000, 0, 0, 0, 0};
  c.push_back({"0.5 + 0.5 MWh solar and wind", lease(10, 1000), half_half, {}});
  oracle::Meter diesel;
  diesel.gen = {0, 0, 0, 0, 1000000, 0};
  c.push_back({"diesel only", lease(10, 1000), diesel, {}});
  c.push_back({"token half rounds up", lease(10, 1000), solar_meter(1500, 0, 0), {}});
  c.push_back({"token below half rounds down", lease(10, 1000), solar_meter(1499, 0, 0), {}});
  return c;
}

inline agreements::Agreement engine_agreement(const oracle::Terms& t, const AccountId& owner = "owner",
                                              const AccountId& consumer = "consumer", const AccountId& grid = "grid") {
  agreements::Parties parties{owner, consumer, std::nullopt};
  if (t.has_grid) parties.grid_operator = grid;
  agreements::Terms terms;
  if (t.kind == "lease")
    terms = agreements::LeaseRebateTerms{t.tariff, t.rebate_bp, t.split_bp, t.surplus_tariff, t.grid_bp, 144};
  else if (t.kind == "rto")
    terms = agreements::RentToOwnTerms{t.tariff, t.installment, 144, false};
  else
    terms = agreements::DirectSaleTerms{t.tariff, t.max_kwh, t.grid_bp, 12};
  auto a = agreements::propose_agreement(parties, terms, "premises-1");
  a.state = agreements::AgreementState::Active;
  return a;
}

inline metering::MeterReading engine_reading(const oracle::Meter& m, std::uint64_t period = 1) {
  metering::MeterReading r;
  r.sequence = period;
  r.period_id = period;
  for (std::size_t i = 0; i < metering::kAllSources.size(); ++i) r.generated_wh[metering::kAllSources[i]] = m.gen[i];
  r.consumed_wh = m.consumed;
  r.exported_wh = m.exported;
  return r;
}

inline oracle::Policy oracle_policy(const settlement::RewardPolicy& p) {
  return {p.base_mt_per_mwh, p.diversity_bonus_pct, p.multiplier_cap_pct, p.min_source_share_bp};
}

inline settlement::RewardPolicy engine_policy(const oracle::Policy& p) {
  return {p.base, p.bonus, p.cap, p.min_share_bp};
}

// Engine output reduced to the oracle's shape.
inline oracle::Outcome engine_outcome(const settlement::Invoice& inv) {
  oracle::Outcome o;
  for (const auto& [who, d] : inv.deltas()) o.cash[who] = d;
  for (const auto& l : inv.line_items) o.labels[l.label] += l.amount_c;
  for (const auto& a : inv.token_awards) o.owner_tokens += a.amount_mt;
  return o;
}

inline bool same_outcome(const oracle::Outcome& a, const oracle::Outcome& b) {
  auto nonzero = [](const std::map<std::string, std::int64_t>& m) {
    std::map<std::string, std::int64_t> out;
    for (const auto& [k, v] : m)
      if (v != 0) out[k] = v;
    return out;
  };
  return nonzero(a.cash) == nonzero(b.cash) && a.labels == b.labels && a.owner_tokens == b.owner_tokens;
}

}  // namespace emarket::testing

#pragma once

// Brute-force settlement reference. Written against the billing rules only,
// sharing no code with the engine: its own term record, its own rounding
// (binary search on the half-up inequality) and per-account bookkeeping.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace emarket::testing::oracle {

using i128 = __int128;

// Smallest q >= 0 with (2q + 1) * den > 2 * num, i.e. num/den rounded half-up.
inline std::int64_t round_half_up(i128 num, i128 den) {
  i128 lo = 0, hi = num / den + 2;
  while (lo < hi) {
    i128 mid = (lo + hi) / 2;
    if (2 * mid * den + den > 2 * num) hi = mid;
    else lo = mid + 1;
  }
  return static_cast<std::int64_t>(lo);
}

struct Terms {
  std::string kind;  // "lease", "rto", "direct"
  std::int64_t tariff = 0;
  std::int64_t rebate_bp = 0;
  std::int64_t split_bp = 0;
  std::int64_t surplus_tariff = 0;
  std::int64_t grid_bp = 0;
  std::int64_t installment = 0;
  std::int64_t max_kwh = 0;
  bool has_grid = false;
};

// Order: solar, wind, hydro, biomass, diesel, other.
struct Meter {
  std::array<std::int64_t, 6> gen{};
  std::int64_t consumed = 0;
  std::int64_t exported = 0;
};

struct Policy {
  std::int64_t base = 1000, bonus = 10, cap = 150, min_share_bp = 1000;
};

struct Outcome {
  std::map<std::string, std::int64_t> cash;    // account -> signed delta
  std::map<std::string, std::int64_t> labels;  // label -> amount
  std::int64_t owner_tokens = 0;
};

inline std::int64_t reward(const Meter& m, const Policy& p) {
  i128 total = 0, renewable = 0;
  for (int i = 0; i < 6; ++i) total += m.gen[i];
  for (int i = 0; i < 4; ++i) renewable += m.gen[i];
  int k = 0;
  for (int i = 0; i < 4; ++i) {
    // share >= min_share_bp / 10000, tested as a cross product
    if (m.gen[i] > 0 && i128(m.gen[i]) * 10000 >= total * p.min_share_bp) ++k;
  }
  std::int64_t mult = 100;
  for (int extra = 1; extra < k; ++extra) mult += p.bonus;
  if (mult > p.cap) mult = p.cap;
  return round_half_up(renewable * p.base * mult, i128(1000000) * 100);
}

inline Outcome settle(const Terms& t, const Meter& m, const Policy& p, const std::string& owner = "owner",
                      const std::string& consumer = "consumer", const std::string& grid = "grid",
                      const std::string& buyer = "market") {
  Outcome o;
  auto pay = [&](const std::string& label, const std::string& from, const std::string& to, std::int64_t c) {
    o.labels[label] += c;
    o.cash[from] -= c;
    o.cash[to] += c;
  };
  if (t.kind == "lease") {
    auto charge = round_half_up(i128(m.consumed) * t.tariff, 1000);
    pay("energy_charge", consumer, owner, charge);
    pay("rebate", owner, consumer, round_half_up(i128(charge) * t.rebate_bp, 10000));
    auto gross = round_half_up(i128(m.exported) * t.surplus_tariff, 1000);
    auto fee = t.has_grid ? round_half_up(i128(gross) * t.grid_bp, 10000) : 0;
    if (t.has_grid) pay("surplus_grid_fee", buyer, grid, fee);
    auto to_consumer = round_half_up(i128(gross - fee) * t.split_bp, 10000);
    pay("surplus_consumer_share", buyer, consumer, to_consumer);
    pay("surplus_owner_share", buyer, owner, gross - fee - to_consumer);
  } else if (t.kind == "rto") {
    pay("energy_charge", consumer, owner, round_half_up(i128(m.consumed) * t.tariff, 1000));
    pay("installment", consumer, owner, t.installment);
  } else {
    i128 cap_wh = i128(t.max_kwh) * 1000;
    i128 delivered = m.exported < cap_wh ? i128(m.exported) : cap_wh;
    auto charge = round_half_up(delivered * t.tariff, 1000);
    pay("energy_charge", consumer, owner, charge);
    if (t.has_grid) pay("grid_fee", consumer, grid, round_half_up(i128(charge) * t.grid_bp, 10000));
  }
  o.owner_tokens = reward(m, p);
  return o;
}

}  // namespace emarket::testing::oracle

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "emarket/kernels/batch.hpp"
#include "emarket/kernels/pow.hpp"

using namespace emarket;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial_ms, parallel_ms,
              parallel_ms > 0 ? serial_ms / parallel_ms : 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  const int scale = argc > 1 ? std::stoi(argv[1]) : 1;
  std::printf("threads: %d\n", kernels::max_threads());

  kernels::PowTemplate tpl{"{\"bench\":true,\"nonce\":", "}", 16};
  volatile std::uint64_t sink = 0;
  report("pow (16 bits)", time_ms([&] { sink = sink + kernels::pow_search_serial(tpl, 0)->nonce; }, scale),
         time_ms([&] { sink = sink + kernels::pow_search_parallel(tpl, 0)->nonce; }, scale));

  const int n = 2000 * scale;
  auto key = crypto::SigningKey::from_seed(crypto::sha256(std::string("bench-device")));
  std::vector<metering::MeterReading> readings;
  readings.reserve(n);
  for (int i = 0; i < n; ++i) {
    metering::ReadingFields f;
    f.sequence = 1 + static_cast<std::uint64_t>(i);
    f.period_id = 1;
    f.generated_wh[metering::Source::Solar] = 4000 + i % 997;
    f.generated_wh[metering::Source::Wind] = 300 + i % 131;
    f.consumed_wh = 2500 + i % 701;
    f.exported_wh = 1000;
    readings.push_back(metering::sign_reading(key, f));
  }
  std::vector<kernels::SignedReading> batch;
  for (const auto& r : readings) batch.push_back({&r, key.public_key()});
  report("verify readings", time_ms([&] { kernels::verify_readings_serial(batch); }, 3),
         time_ms([&] { kernels::verify_readings_parallel(batch); }, 3));

  agreements::LeaseRebateTerms terms;
  terms.tariff_c_per_kwh = 12;
  terms.rebate_bp = 1000;
  terms.surplus_split_bp = 3000;
  terms.surplus_tariff_c_per_kwh = 8;
  terms.grid_fee_bp = 500;
  auto a = agreements::propose_agreement({"owner", "consumer", std::string("grid")}, terms, "P1");
  a.state = agreements::AgreementState::Active;
  std::vector<kernels::SettleJob> jobs;
  for (const auto& r : readings) jobs.push_back({&a, &r});
  settlement::RewardPolicy policy;
  report("settle periods", time_ms([&] { kernels::settle_batch_serial(jobs, policy); }, 3),
         time_ms([&] { kernels::settle_batch_parallel(jobs, policy); }, 3));
  return sink == 0xdeadbeef ? 1 : 0;
}

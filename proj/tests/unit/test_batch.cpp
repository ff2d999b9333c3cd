#include <random>

#include "doctest.h"
#include "emarket/kernels/batch.hpp"
#include "emarket/kernels/pow.hpp"
#include "support/settlement_cases.hpp"

using namespace emarket;
using namespace emarket::kernels;

TEST_CASE("parallel reading verification matches serial") {
  std::mt19937_64 rng(5);
  std::vector<crypto::SigningKey> keys;
  for (int i = 0; i < 4; ++i) keys.push_back(crypto::SigningKey::from_seed(crypto::sha256("batch-key-" + std::to_string(i))));

  std::vector<metering::MeterReading> readings;
  std::vector<SignedReading> batch;
  readings.reserve(300);
  for (int i = 0; i < 300; ++i) {
    metering::ReadingFields f;
    f.sequence = 1 + static_cast<std::uint64_t>(i);
    f.period_id = 1;
    f.generated_wh[metering::Source::Solar] = 1000 + static_cast<std::int64_t>(rng() % 5000);
    f.consumed_wh = static_cast<std::int64_t>(rng() % 4000);
    f.exported_wh = static_cast<std::int64_t>(rng() % 1000);
    const auto& key = keys[i % keys.size()];
    readings.push_back(metering::sign_reading(key, f));
    if (rng() % 3 == 0) readings.back().consumed_wh += 1;
  }
  for (int i = 0; i < 300; ++i) {
    // Every fifth entry is checked against the wrong device key.
    auto signer = (i % 5 == 0) ? (i + 1) % keys.size() : i % keys.size();
    batch.push_back({&readings[i], keys[signer].public_key()});
  }

  auto serial = verify_readings_serial(batch);
  auto parallel = verify_readings_parallel(batch);
  CHECK(serial == parallel);
  std::size_t good = 0;
  for (char c : serial) good += c;
  CHECK(good > 0);
  CHECK(good < batch.size());
  CHECK(verify_readings_parallel({}).empty());
}

TEST_CASE("parallel settlement matches serial") {
  std::vector<agreements::Agreement> agreements;
  std::vector<metering::MeterReading> readings;
  for (const auto& c : testing::settlement_cases()) {
    agreements.push_back(testing::engine_agreement(c.terms));
    readings.push_back(testing::engine_reading(c.meter));
  }
  std::vector<SettleJob> jobs;
  for (int rep = 0; rep < 10; ++rep)
    for (std::size_t i = 0; i < agreements.size(); ++i) jobs.push_back({&agreements[i], &readings[i]});
  auto draft = agreements[0];
  draft.state = agreements::AgreementState::Draft;
  jobs.push_back({&draft, &readings[0]});
  jobs.push_back({&agreements[0], nullptr});

  auto serial = settle_batch_serial(jobs, {});
  auto parallel = settle_batch_parallel(jobs, {});
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].error == parallel[i].error);
    REQUIRE(serial[i].invoice.has_value() == parallel[i].invoice.has_value());
    if (serial[i].invoice) CHECK(serial[i].invoice->to_json() == parallel[i].invoice->to_json());
  }
  CHECK_FALSE(serial[serial.size() - 2].invoice.has_value());
  CHECK_FALSE(serial.back().invoice.has_value());
  CHECK(max_threads() >= 1);
}

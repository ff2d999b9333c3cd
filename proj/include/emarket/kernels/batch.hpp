#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emarket/settlement/settlement.hpp"

namespace emarket::kernels {

struct SignedReading {
  const metering::MeterReading* reading = nullptr;
  PublicKey device_pubkey;
};

// One flag per input, 1 when the device signature checks out.
std::vector<char> verify_readings_serial(std::span<const SignedReading> batch);
std::vector<char> verify_readings_parallel(std::span<const SignedReading> batch);

struct SettleJob {
  const agreements::Agreement* agreement = nullptr;
  const metering::MeterReading* reading = nullptr;
};

struct SettleOutcome {
  std::optional<settlement::Invoice> invoice;
  std::string error;
};

// settle_period over independent agreements; failures are reported per job.
std::vector<SettleOutcome> settle_batch_serial(std::span<const SettleJob> jobs, const settlement::RewardPolicy& policy,
                                               const settlement::SettlementAccounts& accounts = {});
std::vector<SettleOutcome> settle_batch_parallel(std::span<const SettleJob> jobs,
                                                 const settlement::RewardPolicy& policy,
                                                 const settlement::SettlementAccounts& accounts = {});

}  // namespace emarket::kernels

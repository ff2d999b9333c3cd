#include "emarket/kernels/batch.hpp"

#include <cstdint>

namespace emarket::kernels {

namespace {

SettleOutcome settle_one(const SettleJob& job, const settlement::RewardPolicy& policy,
                         const settlement::SettlementAccounts& accounts) {
  try {
    return {settlement::settle_period(*job.agreement, job.reading, policy, accounts), {}};
  } catch (const std::exception& e) {
    return {std::nullopt, e.what()};
  }
}

}  // namespace

std::vector<char> verify_readings_serial(std::span<const SignedReading> batch) {
  std::vector<char> ok(batch.size(), 0);
  for (std::size_t i = 0; i < batch.size(); ++i)
    ok[i] = metering::signature_valid(*batch[i].reading, batch[i].device_pubkey);
  return ok;
}

std::vector<char> verify_readings_parallel(std::span<const SignedReading> batch) {
  std::vector<char> ok(batch.size(), 0);
  const auto n = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i)
    ok[i] = metering::signature_valid(*batch[i].reading, batch[i].device_pubkey);
  return ok;
}

std::vector<SettleOutcome> settle_batch_serial(std::span<const SettleJob> jobs, const settlement::RewardPolicy& policy,
                                               const settlement::SettlementAccounts& accounts) {
  std::vector<SettleOutcome> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(settle_one(job, policy, accounts));
  return out;
}

std::vector<SettleOutcome> settle_batch_parallel(std::span<const SettleJob> jobs,
                                                 const settlement::RewardPolicy& policy,
                                                 const settlement::SettlementAccounts& accounts) {
  std::vector<SettleOutcome> out(jobs.size());
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) out[i] = settle_one(jobs[i], policy, accounts);
  return out;
}

}  // namespace emarket::kernels

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "emarket/ledger/local_ledger.hpp"
#include "emarket/metering/reading.hpp"

namespace emarket::metering {

// Simulated shielded execution: a device is trusted when its firmware
// measurement is whitelisted and the manufacturer root has signed a quote
// binding that measurement to the device key.

Hash256 measure_firmware(std::string_view manifest);

class FirmwareWhitelist {
 public:
  FirmwareWhitelist() = default;
  FirmwareWhitelist(std::initializer_list<std::string_view> manifests) {
    for (auto m : manifests) allow(m);
  }
  void allow(std::string_view manifest) { allowed_.insert(measure_firmware(manifest)); }
  void allow_measurement(const Hash256& m) { allowed_.insert(m); }
  void revoke(std::string_view manifest) { allowed_.erase(measure_firmware(manifest)); }
  bool contains(const Hash256& measurement) const { return allowed_.count(measurement) != 0; }
  const std::set<Hash256>& measurements() const { return allowed_; }

 private:
  std::set<Hash256> allowed_;
};

struct MeterDevice {
  DeviceId device_id;
  PublicKey device_pubkey;
  Hash256 code_measurement;
  std::string premises_id;

  Json to_json() const;
  static MeterDevice from_json(const Json& j);
};

struct AttestationQuote {
  DeviceId device_id;
  Hash256 code_measurement;
  PublicKey device_pubkey;
  Signature root_signature;

  // The bytes the root key signs.
  Json body_json() const;
  Json to_json() const;
  static AttestationQuote from_json(const Json& j);
};

AttestationQuote make_quote(const MeterDevice& device, const crypto::SigningKey& root);

struct QuoteCheck {
  bool ok = false;
  std::string reason;
  explicit operator bool() const { return ok; }
};

QuoteCheck verify_quote(const AttestationQuote& quote, const PublicKey& root_pubkey,
                        const FirmwareWhitelist& whitelist);

struct ProvisionedDevice {
  MeterDevice device;
  AttestationQuote quote;
  crypto::SigningKey key;
};

// Deterministic source of device ids and keys: the n-th device provisioned
// from a given seed is always the same.
class DeviceFactory {
 public:
  explicit DeviceFactory(std::string seed) : seed_(std::move(seed)) {}

  // Throws MeteringError{UnknownFirmware} for a non-whitelisted manifest.
  ProvisionedDevice provision(std::string_view manifest, const std::string& premises_id,
                              const crypto::SigningKey& root, const FirmwareWhitelist& whitelist);

  std::uint64_t provisioned() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::string seed_;
  std::uint64_t counter_ = 0;
};

enum class RejectReason { BadSignature, SequenceReplay, SequenceGap, BadQuantities, UnattestedDevice };
const char* to_string(RejectReason r);

struct IngestResult {
  bool accepted = false;
  std::optional<RejectReason> reason;
  Hash256 reading_hash;
  std::optional<Hash256> commit_tx;
};

struct Rejection {
  MeterReading reading;
  RejectReason reason;
};

// Device registry and reading verifier. Accepted readings are committed to
// the ledger as MeterCommit transactions carrying the reading hash.
class MeterRegistry {
 public:
  MeterRegistry(PublicKey root_pubkey, FirmwareWhitelist whitelist, ledger::LedgerPort* ledger = nullptr,
                AccountId committer = "operator");

  // Registers the device only when the quote verifies and matches it.
  QuoteCheck enroll(const MeterDevice& device, const AttestationQuote& quote);

  IngestResult ingest(const MeterReading& reading);

  const MeterDevice* find(const DeviceId& id) const;
  std::uint64_t last_sequence(const DeviceId& id) const;
  std::vector<MeterDevice> devices() const;

  // First accepted reading for (device, period), if any.
  std::optional<MeterReading> reading_for(const DeviceId& id, std::uint64_t period_id) const;
  std::vector<MeterReading> accepted_readings(const DeviceId& id) const;
  std::vector<Rejection> rejections() const;

  const FirmwareWhitelist& whitelist() const { return whitelist_; }
  const PublicKey& root_pubkey() const { return root_pubkey_; }

  // Restore path: rebuild state from persisted records without re-committing.
  void restore_device(const MeterDevice& device, std::uint64_t last_sequence);
  void restore_reading(const MeterReading& reading);

 private:
  struct DeviceState {
    MeterDevice device;
    std::uint64_t last_sequence = 0;
    std::map<std::uint64_t, MeterReading> accepted;  // by sequence
  };

  mutable std::mutex mu_;
  PublicKey root_pubkey_;
  FirmwareWhitelist whitelist_;
  ledger::LedgerPort* ledger_;
  AccountId committer_;
  std::map<DeviceId, DeviceState> devices_;
  std::vector<Rejection> rejections_;
};

}  // namespace emarket::metering

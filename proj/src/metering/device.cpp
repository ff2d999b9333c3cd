#include "emarket/metering/device.hpp"

namespace emarket::metering {

Hash256 measure_firmware(std::string_view manifest) { return crypto::sha256(manifest); }

Json MeterDevice::to_json() const {
  return Json{{"code_measurement", code_measurement.hex()},
              {"device_id", device_id.hex()},
              {"device_pubkey", device_pubkey.hex()},
              {"premises_id", premises_id}};
}

MeterDevice MeterDevice::from_json(const Json& j) {
  MeterDevice d;
  d.device_id = DeviceId::from_hex(require_string(j, "device_id"));
  d.device_pubkey = PublicKey::from_hex(require_string(j, "device_pubkey"));
  d.code_measurement = Hash256::from_hex(require_string(j, "code_measurement"));
  d.premises_id = require_string(j, "premises_id");
  return d;
}

Json AttestationQuote::body_json() const {
  return Json{{"code_measurement", code_measurement.hex()},
              {"device_id", device_id.hex()},
              {"device_pubkey", device_pubkey.hex()}};
}

Json AttestationQuote::to_json() const {
  Json j = body_json();
  j["root_signature"] = root_signature.hex();
  return j;
}

AttestationQuote AttestationQuote::from_json(const Json& j) {
  AttestationQuote q;
  q.device_id = DeviceId::from_hex(require_string(j, "device_id"));
  q.code_measurement = Hash256::from_hex(require_string(j, "code_measurement"));
  q.device_pubkey = PublicKey::from_hex(require_string(j, "device_pubkey"));
  q.root_signature = Signature::from_hex(require_string(j, "root_signature"));
  return q;
}

AttestationQuote make_quote(const MeterDevice& device, const crypto::SigningKey& root) {
  AttestationQuote q{device.device_id, device.code_measurement, device.device_pubkey, {}};
  q.root_signature = root.sign(as_bytes(canonical_dump(q.body_json())));
  return q;
}

QuoteCheck verify_quote(const AttestationQuote& quote, const PublicKey& root_pubkey,
                        const FirmwareWhitelist& whitelist) {
  if (!crypto::verify(root_pubkey, as_bytes(canonical_dump(quote.body_json())), quote.root_signature))
    return {false, "root signature does not verify"};
  if (!whitelist.contains(quote.code_measurement)) return {false, "code measurement is not whitelisted"};
  return {true, {}};
}

ProvisionedDevice DeviceFactory::provision(std::string_view manifest, const std::string& premises_id,
                                           const crypto::SigningKey& root,
                                           const FirmwareWhitelist& whitelist) {
  auto measurement = measure_firmware(manifest);
  if (!whitelist.contains(measurement))
    throw MeteringError(MeteringErrc::UnknownFirmware,
                        "firmware manifest '" + std::string(manifest) + "' is not whitelisted");
  auto material = seed_ + "/" + std::to_string(counter_++);
  auto id_hash = crypto::derive("emarket/device-id", material);
  MeterDevice d;
  std::copy_n(id_hash.data.begin(), d.device_id.data.size(), d.device_id.data.begin());
  auto key = crypto::SigningKey::from_seed(crypto::derive("emarket/device-key", material));
  d.device_pubkey = key.public_key();
  d.code_measurement = measurement;
  d.premises_id = premises_id;
  auto quote = make_quote(d, root);
  return {d, quote, key};
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::BadSignature: return "BadSignature";
    case RejectReason::SequenceReplay: return "SequenceReplay";
    case RejectReason::SequenceGap: return "SequenceGap";
    case RejectReason::BadQuantities: return "BadQuantities";
    case RejectReason::UnattestedDevice: return "UnattestedDevice";
  }
  return "Unknown";
}

MeterRegistry::MeterRegistry(PublicKey root_pubkey, FirmwareWhitelist whitelist,
                             ledger::LedgerPort* ledger, AccountId committer)
    : root_pubkey_(root_pubkey), whitelist_(std::move(whitelist)), ledger_(ledger),
      committer_(std::move(committer)) {}

QuoteCheck MeterRegistry::enroll(const MeterDevice& device, const AttestationQuote& quote) {
  auto check = verify_quote(quote, root_pubkey_, whitelist_);
  if (!check) return check;
  if (quote.device_id != device.device_id || quote.device_pubkey != device.device_pubkey ||
      quote.code_measurement != device.code_measurement)
    return {false, "quote does not describe this device"};
  std::lock_guard lock(mu_);
  if (devices_.count(device.device_id) != 0)
    throw MeteringError(MeteringErrc::DuplicateDevice, "device " + device.device_id.hex() + " already enrolled");
  devices_.emplace(device.device_id, DeviceState{device, 0, {}});
  return check;
}

IngestResult MeterRegistry::ingest(const MeterReading& reading) {
  IngestResult result;
  result.reading_hash = reading.hash();
  auto reject = [&](RejectReason why) {
    result.reason = why;
    rejections_.push_back({reading, why});
    return result;
  };

  std::lock_guard lock(mu_);
  auto it = devices_.find(reading.device_id);
  if (it == devices_.end() || !whitelist_.contains(it->second.device.code_measurement))
    return reject(RejectReason::UnattestedDevice);
  auto& state = it->second;
  if (!signature_valid(reading, state.device.device_pubkey)) return reject(RejectReason::BadSignature);
  if (!reading.quantities_valid()) return reject(RejectReason::BadQuantities);
  if (reading.sequence <= state.last_sequence) return reject(RejectReason::SequenceReplay);
  if (reading.sequence != state.last_sequence + 1) return reject(RejectReason::SequenceGap);

  if (ledger_ != nullptr) {
    Json payload = {{"device_id", reading.device_id.hex()},
                    {"period_id", reading.period_id},
                    {"reading_hash", result.reading_hash.hex()},
                    {"sequence", reading.sequence}};
    result.commit_tx = ledger_->submit(ledger::TxKind::MeterCommit, std::move(payload), committer_);
  }
  state.last_sequence = reading.sequence;
  state.accepted.emplace(reading.sequence, reading);
  result.accepted = true;
  return result;
}

const MeterDevice* MeterRegistry::find(const DeviceId& id) const {
  std::lock_guard lock(mu_);
  auto it = devices_.find(id);
  return it == devices_.end() ? nullptr : &it->second.device;
}

std::uint64_t MeterRegistry::last_sequence(const DeviceId& id) const {
  std::lock_guard lock(mu_);
  auto it = devices_.find(id);
  return it == devices_.end() ? 0 : it->second.last_sequence;
}

std::vector<MeterDevice> MeterRegistry::devices() const {
  std::lock_guard lock(mu_);
  std::vector<MeterDevice> out;
  for (const auto& [id, s] : devices_) out.push_back(s.device);
  return out;
}

std::optional<MeterReading> MeterRegistry::reading_for(const DeviceId& id, std::uint64_t period_id) const {
  std::lock_guard lock(mu_);
  auto it = devices_.find(id);
  if (it == devices_.end()) return std::nullopt;
  for (const auto& [seq, r] : it->second.accepted)
    if (r.period_id == period_id) return r;
  return std::nullopt;
}

std::vector<MeterReading> MeterRegistry::accepted_readings(const DeviceId& id) const {
  std::lock_guard lock(mu_);
  std::vector<MeterReading> out;
  auto it = devices_.find(id);
  if (it == devices_.end()) return out;
  for (const auto& [seq, r] : it->second.accepted) out.push_back(r);
  return out;
}

std::vector<Rejection> MeterRegistry::rejections() const {
  std::lock_guard lock(mu_);
  return rejections_;
}

void MeterRegistry::restore_device(const MeterDevice& device, std::uint64_t last_sequence) {
  std::lock_guard lock(mu_);
  devices_[device.device_id] = DeviceState{device, last_sequence, {}};
}

void MeterRegistry::restore_reading(const MeterReading& reading) {
  std::lock_guard lock(mu_);
  auto& s = devices_.at(reading.device_id);
  s.accepted.emplace(reading.sequence, reading);
  s.last_sequence = std::max(s.last_sequence, reading.sequence);
}

}  // namespace emarket::metering

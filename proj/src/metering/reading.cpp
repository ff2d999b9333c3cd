#include "emarket/metering/reading.hpp"

namespace emarket::metering {

const char* to_string(Source s) {
  switch (s) {
    case Source::Solar: return "solar";
    case Source::Wind: return "wind";
    case Source::Hydro: return "hydro";
    case Source::Biomass: return "biomass";
    case Source::Diesel: return "diesel";
    case Source::Other: return "other";
  }
  return "other";
}

std::optional<Source> parse_source(std::string_view name) {
  for (auto s : kAllSources)
    if (name == to_string(s)) return s;
  return std::nullopt;
}

const char* to_string(MeteringErrc code) {
  switch (code) {
    case MeteringErrc::UnknownFirmware: return "UnknownFirmware";
    case MeteringErrc::InvalidQuantities: return "InvalidQuantities";
    case MeteringErrc::DuplicateDevice: return "DuplicateDevice";
    case MeteringErrc::UnknownDevice: return "UnknownDevice";
    case MeteringErrc::Malformed: return "Malformed";
  }
  return "Unknown";
}

EnergyBySource normalise(EnergyBySource e) {
  for (auto s : kAllSources) e.try_emplace(s, 0);
  return e;
}

std::int64_t ReadingFields::wh(Source s) const {
  auto it = generated_wh.find(s);
  return it == generated_wh.end() ? 0 : it->second;
}

std::int64_t ReadingFields::total_generated() const {
  std::int64_t total = 0;
  for (const auto& [s, v] : generated_wh) total += v;
  return total;
}

bool ReadingFields::quantities_valid() const {
  if (sequence == 0) return false;
  if (consumed_wh < 0 || exported_wh < 0) return false;
  for (const auto& [s, v] : generated_wh)
    if (v < 0) return false;
  return exported_wh <= total_generated();
}

Json ReadingFields::to_json() const {
  Json gen = Json::object();
  for (auto s : kAllSources) gen[to_string(s)] = wh(s);
  return Json{
      {"consumed_wh", consumed_wh}, {"device_id", device_id.hex()}, {"exported_wh", exported_wh},
      {"generated_wh", gen},        {"period_id", period_id},       {"sequence", sequence},
  };
}

Json MeterReading::to_json() const {
  Json j = ReadingFields::to_json();
  j["signature"] = signature.hex();
  return j;
}

MeterReading MeterReading::from_json(const Json& j) {
  try {
    MeterReading r;
    r.device_id = DeviceId::from_hex(require_string(j, "device_id"));
    auto seq = require_int(j, "sequence");
    auto period = require_int(j, "period_id");
    if (seq < 0 || period < 0) throw std::invalid_argument("sequence and period_id must be non-negative");
    r.sequence = static_cast<std::uint64_t>(seq);
    r.period_id = static_cast<std::uint64_t>(period);
    r.consumed_wh = require_int(j, "consumed_wh");
    r.exported_wh = require_int(j, "exported_wh");
    const auto& gen = require_field(j, "generated_wh");
    if (!gen.is_object()) throw std::invalid_argument("generated_wh must be an object");
    for (const auto& [name, v] : gen.items()) {
      auto src = parse_source(name);
      if (!src) throw std::invalid_argument("unknown energy source '" + name + "'");
      if (!v.is_number_integer()) throw std::invalid_argument("generated_wh values must be integers");
      r.generated_wh[*src] = v.get<std::int64_t>();
    }
    r.generated_wh = normalise(std::move(r.generated_wh));
    if (j.contains("signature")) r.signature = Signature::from_hex(require_string(j, "signature"));
    return r;
  } catch (const MeteringError&) {
    throw;
  } catch (const std::exception& e) {
    throw MeteringError(MeteringErrc::Malformed, std::string("malformed reading: ") + e.what());
  }
}

Hash256 MeterReading::hash() const { return canonical_hash(to_json()); }

MeterReading sign_reading(const crypto::SigningKey& device_key, ReadingFields fields) {
  fields.generated_wh = normalise(std::move(fields.generated_wh));
  if (!fields.quantities_valid())
    throw MeteringError(MeteringErrc::InvalidQuantities,
                        "reading quantities invalid (negative energy, zero sequence, or export above generation)");
  MeterReading r;
  static_cast<ReadingFields&>(r) = std::move(fields);
  r.signature = device_key.sign(as_bytes(canonical_dump(r.ReadingFields::to_json())));
  return r;
}

bool signature_valid(const MeterReading& r, const PublicKey& device_pubkey) {
  return crypto::verify(device_pubkey, as_bytes(canonical_dump(r.ReadingFields::to_json())),
                        r.signature);
}

}  // namespace emarket::metering

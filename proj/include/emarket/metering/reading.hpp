#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "emarket/common/canonical_json.hpp"
#include "emarket/common/crypto.hpp"

namespace emarket::metering {

enum class Source { Solar, Wind, Hydro, Biomass, Diesel, Other };

inline constexpr std::array<Source, 6> kAllSources{Source::Solar,  Source::Wind,   Source::Hydro,
                                                   Source::Biomass, Source::Diesel, Source::Other};

const char* to_string(Source s);
std::optional<Source> parse_source(std::string_view name);
constexpr bool is_renewable(Source s) {
  return s == Source::Solar || s == Source::Wind || s == Source::Hydro || s == Source::Biomass;
}

enum class MeteringErrc { UnknownFirmware, InvalidQuantities, DuplicateDevice, UnknownDevice, Malformed };
const char* to_string(MeteringErrc code);

class MeteringError : public std::runtime_error {
 public:
  MeteringError(MeteringErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  MeteringErrc code() const { return code_; }

 private:
  MeteringErrc code_;
};

// Watt-hours per source; always carries all six sources once normalised.
using EnergyBySource = std::map<Source, std::int64_t>;

struct ReadingFields {
  DeviceId device_id;
  std::uint64_t sequence = 0;
  std::uint64_t period_id = 0;
  EnergyBySource generated_wh;
  std::int64_t consumed_wh = 0;
  std::int64_t exported_wh = 0;

  std::int64_t total_generated() const;
  std::int64_t wh(Source s) const;
  // Canonical form of everything the device signs.
  Json to_json() const;
  bool quantities_valid() const;

  bool operator==(const ReadingFields&) const = default;
};

struct MeterReading : ReadingFields {
  Signature signature;

  Json to_json() const;
  static MeterReading from_json(const Json& j);
  // sha256 of the canonical signed reading; what goes on-chain.
  Hash256 hash() const;

  bool operator==(const MeterReading&) const = default;
};

EnergyBySource normalise(EnergyBySource e);

// Throws MeteringError{InvalidQuantities} for negative energies, a zero
// sequence, or exports above total generation.
MeterReading sign_reading(const crypto::SigningKey& device_key, ReadingFields fields);

bool signature_valid(const MeterReading& r, const PublicKey& device_pubkey);

}  // namespace emarket::metering

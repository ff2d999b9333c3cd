#include "emarket/common/canonical_json.hpp"

#include "emarket/common/crypto.hpp"

namespace emarket {

namespace {
void reject_floats(const Json& v) {
  switch (v.type()) {
    case Json::value_t::number_float:
      throw CanonicalError("floating point value in canonical payload");
    case Json::value_t::object:
      for (const auto& [k, child] : v.items()) reject_floats(child);
      break;
    case Json::value_t::array:
      for (const auto& child : v) reject_floats(child);
      break;
    case Json::value_t::binary:
    case Json::value_t::discarded:
      throw CanonicalError("non-JSON value in canonical payload");
    default:
      break;
  }
}
}  // namespace

std::string canonical_dump(const Json& value) {
  reject_floats(value);
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Hash256 canonical_hash(const Json& value) { return crypto::sha256(canonical_dump(value)); }

const Json& require_field(const Json& obj, const char* key) {
  if (!obj.is_object()) throw std::invalid_argument("expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

std::int64_t require_int(const Json& obj, const char* key) {
  const auto& v = require_field(obj, key);
  if (!v.is_number_integer())
    throw std::invalid_argument(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string require_string(const Json& obj, const char* key) {
  const auto& v = require_field(obj, key);
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace emarket

#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"

#include "emarket/common/bytes.hpp"

namespace emarket {

using Json = nlohmann::json;

struct CanonicalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compact UTF-8 JSON with bytewise-sorted object keys. Floating point values
// are rejected anywhere in the tree.
std::string canonical_dump(const Json& value);

Hash256 canonical_hash(const Json& value);

// Field accessors that turn nlohmann type errors into a uniform message.
const Json& require_field(const Json& obj, const char* key);
std::int64_t require_int(const Json& obj, const char* key);
std::string require_string(const Json& obj, const char* key);

}  // namespace emarket

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "emarket/common/canonical_json.hpp"

namespace emarket {

struct JsonlCorrupt : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Append-only file of canonical JSON values, one per line. A write is only
// durable once its newline is on disk, so an unterminated final line is a
// torn write and is dropped on load.
class JsonlFile {
 public:
  explicit JsonlFile(std::string path) : path_(std::move(path)) {}

  // Throws std::runtime_error when the file cannot be written.
  void append(const Json& value) const;
  void append_all(const std::vector<Json>& values) const;
  const std::string& path() const { return path_; }

  // Every complete line, in order. Throws JsonlCorrupt for a malformed
  // terminated line. With repair, a torn tail is truncated away so later
  // appends start on a fresh line.
  static std::vector<Json> load(const std::string& path, bool repair = false);

 private:
  std::string path_;
};

}  // namespace emarket

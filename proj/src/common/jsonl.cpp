#include "emarket/common/jsonl.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace emarket {

void JsonlFile::append(const Json& value) const { append_all({value}); }

void JsonlFile::append_all(const std::vector<Json>& values) const {
  std::string buf;
  for (const auto& v : values) {
    buf += canonical_dump(v);
    buf += '\n';
  }
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path_ + " for append");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed on " + path_);
}

std::vector<Json> JsonlFile::load(const std::string& path, bool repair) {
  std::vector<Json> values;
  std::ifstream in(path, std::ios::binary);
  if (!in) return values;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();

  std::size_t pos = 0, lineno = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      // torn tail: never acknowledged, never applied
      if (repair) std::filesystem::resize_file(path, pos);
      break;
    }
    ++lineno;
    auto line = std::string_view(data).substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      values.push_back(Json::parse(line));
    } catch (const std::exception& e) {
      throw JsonlCorrupt(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return values;
}

}  // namespace emarket

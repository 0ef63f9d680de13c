#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "valign/error.hpp"

namespace valign {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << bytes;
  if (!out) throw InputError("write failed for " + path.string());
}

// One parsed object per non-blank line. `on_line` receives the object and
// the 1-based line number.
template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& on_line) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected a JSON object");
    }
    try {
      on_line(obj, lineno);
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

template <typename T, typename ToJson>
std::string to_jsonl(const std::vector<T>& rows, ToJson&& to_json) {
  std::string out;
  for (const auto& row : rows) {
    out += to_json(row).dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace valign

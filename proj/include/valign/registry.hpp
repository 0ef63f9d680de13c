#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "valign/jsonl.hpp"
#include "valign/text.hpp"
#include "valign/types.hpp"

namespace valign {

struct ValueCategory {
  std::string id;
  std::string name;
  std::string value;
  std::string counter_value;

  const std::string& text(Stance s) const { return s == Stance::value ? value : counter_value; }

  friend bool operator==(const ValueCategory&, const ValueCategory&) = default;
};

// Immutable, ordered set of value categories. Lookups by id are O(1).
class Registry {
 public:
  Registry() = default;

  explicit Registry(std::vector<ValueCategory> categories) : categories_(std::move(categories)) {
    for (std::size_t i = 0; i < categories_.size(); ++i) {
      const auto& c = categories_[i];
      validate(c, "entry #" + std::to_string(i + 1));
      if (!index_.emplace(c.id, i).second) {
        throw InputError("duplicate category id '" + c.id + "' at entry #" + std::to_string(i + 1));
      }
    }
  }

  static void validate(const ValueCategory& c, const std::string& where) {
    auto fail = [&](const std::string& msg) {
      throw InputError(where + " (id '" + c.id + "'): " + msg);
    };
    if (c.id.empty()) fail("empty id");
    if (std::any_of(c.id.begin(), c.id.end(), text::is_space)) fail("id contains whitespace");
    if (text::trim(c.value).empty()) fail("empty value text");
    if (text::trim(c.counter_value).empty()) fail("empty counter_value text");
    if (c.value == c.counter_value) fail("value and counter_value are identical");
  }

  const std::vector<ValueCategory>& categories() const noexcept { return categories_; }
  std::size_t size() const noexcept { return categories_.size(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  const ValueCategory& at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError("unknown category id '" + id + "'");
    return categories_[it->second];
  }

  std::size_t position(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError("unknown category id '" + id + "'");
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& c : categories_) out.push_back(c.id);
    return out;
  }

  // Registry restricted to categories not in `excluded`, order preserved.
  Registry without(const std::vector<std::string>& excluded) const {
    std::vector<ValueCategory> kept;
    for (const auto& c : categories_) {
      if (std::find(excluded.begin(), excluded.end(), c.id) == excluded.end()) kept.push_back(c);
    }
    return Registry(std::move(kept));
  }

  friend bool operator==(const Registry& a, const Registry& b) {
    return a.categories_ == b.categories_;
  }

 private:
  std::vector<ValueCategory> categories_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline const std::string& value_text(const Registry& registry, const std::string& category_id,
                                     Stance stance) {
  return registry.at(category_id).text(stance);
}

namespace detail {

// Line number of every '{' that opens a top-level array element. Used only
// to attach line context to validation errors.
inline std::vector<std::size_t> element_lines(const std::string& bytes) {
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (char c : bytes) {
    if (c == '\n') ++line;
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '[':
      case '{':
        if (c == '{' && depth == 1) lines.push_back(line);
        ++depth;
        break;
      case ']':
      case '}': --depth; break;
      default: break;
    }
  }
  return lines;
}

}  // namespace detail

inline Registry parse_registry(const std::string& bytes, const std::string& source = "<registry>") {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw InputError(source + ": " + e.what());
  }
  if (!doc.is_array()) throw InputError(source + ": expected a top-level list of categories");

  const auto lines = detail::element_lines(bytes);
  std::vector<ValueCategory> categories;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = source + ":" + (i < lines.size() ? std::to_string(lines[i]) : "?") +
                              " entry #" + std::to_string(i + 1);
    const auto& item = doc[i];
    if (!item.is_object()) throw InputError(where + ": expected an object");
    ValueCategory c;
    for (auto [key, field] : {std::pair{"id", &c.id}, std::pair{"name", &c.name},
                              std::pair{"value", &c.value},
                              std::pair{"counter_value", &c.counter_value}}) {
      auto it = item.find(key);
      if (it == item.end() || !it->is_string()) {
        throw InputError(where + ": missing string field '" + key + "'");
      }
      *field = it->get<std::string>();
    }
    Registry::validate(c, where);
    if (auto [it, fresh] = seen.emplace(c.id, i); !fresh) {
      throw InputError(where + ": duplicate category id '" + c.id + "' (first at entry #" +
                       std::to_string(it->second + 1) + ")");
    }
    categories.push_back(std::move(c));
  }
  return Registry(std::move(categories));
}

inline Registry load_registry(const std::filesystem::path& path) {
  return parse_registry(read_file(path), path.string());
}

inline std::string serialize_registry(const Registry& registry) {
  ordered_json doc = ordered_json::array();
  for (const auto& c : registry.categories()) {
    doc.push_back({{"id", c.id}, {"name", c.name}, {"value", c.value},
                   {"counter_value", c.counter_value}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace valign

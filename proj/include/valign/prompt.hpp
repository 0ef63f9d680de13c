#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "valign/registry.hpp"
#include "valign/rng.hpp"

namespace valign {

struct SeedExample {
  std::string content;
  std::string category_id;
  Stance stance = Stance::value;
};

// Few-shot pools keyed by (category, stance). Within a pool, contents are
// unique under text::normalize.
class SeedPool {
 public:
  using Key = std::pair<std::string, Stance>;

  void add(SeedExample example) {
    if (text::trim(example.content).empty()) {
      throw InputError("seed example for '" + example.category_id + "' has empty content");
    }
    auto& norms = normalized_[{example.category_id, example.stance}];
    if (!norms.insert(text::normalize(example.content)).second) {
      throw InputError("duplicate seed example in pool (" + example.category_id + ", " +
                       std::string(to_string(example.stance)) + "): " + example.content);
    }
    pools_[{example.category_id, example.stance}].push_back(std::move(example));
  }

  const std::vector<SeedExample>* find(const std::string& category_id, Stance stance) const {
    auto it = pools_.find({category_id, stance});
    return it == pools_.end() ? nullptr : &it->second;
  }

  const std::map<Key, std::vector<SeedExample>>& pools() const noexcept { return pools_; }

  // Every entry, in (category, stance) key order then file order.
  std::vector<SeedExample> all() const {
    std::vector<SeedExample> out;
    for (const auto& [key, entries] : pools_) out.insert(out.end(), entries.begin(), entries.end());
    return out;
  }

  bool contains_normalized(const std::string& normalized) const {
    for (const auto& [key, norms] : normalized_) {
      if (norms.count(normalized)) return true;
    }
    return false;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [key, entries] : pools_) n += entries.size();
    return n;
  }

 private:
  std::map<Key, std::vector<SeedExample>> pools_;
  std::map<Key, std::unordered_set<std::string>> normalized_;
};

inline SeedPool load_seed_pool(const std::filesystem::path& path, const Registry& registry) {
  SeedPool pool;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    SeedExample ex;
    ex.content = obj.at("content").get<std::string>();
    ex.category_id = obj.at("category_id").get<std::string>();
    ex.stance = parse_stance(obj.at("stance").get<std::string>());
    if (!registry.contains(ex.category_id)) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": unknown category id '" +
                       ex.category_id + "'");
    }
    try {
      pool.add(std::move(ex));
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return pool;
}

inline ordered_json to_json(const SeedExample& ex) {
  return {{"content", ex.content}, {"category_id", ex.category_id},
          {"stance", std::string(to_string(ex.stance))}};
}

// k distinct pool contents in an order determined solely by `seed`.
inline std::vector<std::string> sample_fewshot(const SeedPool& pool, const std::string& category_id,
                                               Stance stance, std::size_t k, std::uint64_t seed) {
  const auto* entries = pool.find(category_id, stance);
  const std::size_t have = entries ? entries->size() : 0;
  if (have < k) {
    throw InputError("seed pool (" + category_id + ", " + std::string(to_string(stance)) + ") has " +
                     std::to_string(have) + " entries, need " + std::to_string(k));
  }
  std::vector<std::size_t> order(have);
  for (std::size_t i = 0; i < have; ++i) order[i] = i;
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform random k-permutation.
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(order[i], order[i + rng.below(have - i)]);
  }
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back((*entries)[order[i]].content);
  return out;
}

inline constexpr int kDefaultTemplate = 1;
inline constexpr std::size_t kDefaultShots = 5;

inline std::string label_word(Stance stance) {
  return stance == Stance::value ? "sexist" : "non-sexist";
}

struct PromptSpec {
  int template_id = kDefaultTemplate;
  std::string label_word;
  std::string value;
  std::vector<std::string> fewshot;
  std::uint64_t rng_seed = 0;
  std::string category_id;
  Stance stance = Stance::value;
};

// Marker that precedes each content item in a template's enumeration.
inline std::string content_marker(int template_id) {
  return template_id == 3 ? "content=" : "Content:";
}

inline std::string render_prompt(const PromptSpec& spec) {
  const std::string& label = spec.label_word;
  const std::string& value = spec.value;
  std::string out;
  switch (spec.template_id) {
    case 1:
      out = "Generate " + label + " content that is relevant to the Value. Value:" + value + "\n";
      for (const auto& c : spec.fewshot) out += "Content:" + c + "\n";
      out += "Content:";
      break;
    case 2:
      out = "Each item in the following list contains a value and the respective \"" + label +
            "\" content according to the value.\n";
      for (const auto& c : spec.fewshot) out += "Value:" + value + " Content:" + c + "\n";
      out += "Value:" + value + " Content:";
      break;
    case 3:
      for (const auto& c : spec.fewshot) {
        out += "value=\"" + value + "\"\n label=\"" + label + "\"\n content=" + c + "\n";
      }
      out += "value=\"" + value + "\"\n label=\"" + label + "\"\n content=";
      break;
    case 4:
      for (const auto& c : spec.fewshot) {
        out += "Value:" + value + " Label:" + label + " Content:" + c + "\n";
      }
      out += "Value:" + value + " Label:" + label + " Content:";
      break;
    case 5:
      out = "Generate " + label + " content that is relevant to the Value.\n";
      for (const auto& c : spec.fewshot) out += "Value:" + value + " Content:" + c + "\n";
      out += "Value:" + value + " Content:";
      break;
    default:
      throw ConfigError("unknown prompt template id " + std::to_string(spec.template_id) +
                        " (expected 1..5)");
  }
  return out;
}

inline std::vector<PromptSpec> build_generation_prompts(const Registry& registry, const SeedPool& pool,
                                                        const std::string& category_id, Stance stance,
                                                        std::size_t n_prompts, int template_id,
                                                        std::uint64_t base_seed,
                                                        std::size_t shots = kDefaultShots) {
  const std::string& value = value_text(registry, category_id, stance);
  std::vector<PromptSpec> specs;
  specs.reserve(n_prompts);
  for (std::size_t i = 0; i < n_prompts; ++i) {
    PromptSpec spec;
    spec.template_id = template_id;
    spec.label_word = label_word(stance);
    spec.value = value;
    spec.rng_seed = base_seed + i;
    spec.fewshot = sample_fewshot(pool, category_id, stance, shots, spec.rng_seed);
    spec.category_id = category_id;
    spec.stance = stance;
    specs.push_back(std::move(spec));
  }
  return specs;
}

}  // namespace valign

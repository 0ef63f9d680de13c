#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "valign/distiller.hpp"

namespace valign {

// The task unit: content C judged under value V with label Y.
struct Triplet {
  std::string content;
  std::string value;
  Label label = Label::sexist;
  std::string category_id;          // category the value text belongs to
  std::string content_category_id;  // category the content was drawn from
  Stance stance = Stance::value;
  Origin origin = Origin::generated;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

inline void check_triplet(const Triplet& t) {
  auto fail = [&](const char* msg) {
    throw InvariantError(std::string(msg) + " (content '" + t.content + "', value category '" + t.category_id +
                         "', content category '" + t.content_category_id + "')");
  };
  switch (t.label) {
    case Label::sexist:
      if (t.stance != Stance::value || t.category_id != t.content_category_id)
        fail("sexist triplet must use its own category's value");
      break;
    case Label::non_sexist:
      if (t.stance != Stance::counter_value || t.category_id != t.content_category_id)
        fail("non_sexist triplet must use its own category's counter-value");
      break;
    case Label::na:
      if (t.category_id == t.content_category_id) fail("na triplet must use an unrelated category");
      break;
  }
}

struct LabeledContent {
  std::string content;
  std::string category_id;
  Origin origin = Origin::generated;
};

inline std::vector<LabeledContent> as_labeled(const std::vector<GeneratedSample>& samples) {
  std::vector<LabeledContent> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.content, s.category_id, Origin::generated});
  return out;
}

inline std::vector<LabeledContent> as_labeled(const SeedPool& pool) {
  std::vector<LabeledContent> out;
  for (const auto& ex : pool.all()) out.push_back({ex.content, ex.category_id, Origin::human});
  return out;
}

// Each content yields (content, value, sexist) then (content, counter_value, non_sexist).
inline std::vector<Triplet> pair_labels(const std::vector<LabeledContent>& contents, const Registry& registry) {
  std::vector<Triplet> out;
  out.reserve(contents.size() * 2);
  for (const auto& c : contents) {
    const auto& cat = registry.at(c.category_id);
    out.push_back({c.content, cat.value, Label::sexist, cat.id, cat.id, Stance::value, c.origin});
    out.push_back({c.content, cat.counter_value, Label::non_sexist, cat.id, cat.id, Stance::counter_value, c.origin});
  }
  return out;
}

inline std::vector<Triplet> pair_labels(const std::vector<GeneratedSample>& samples, const Registry& registry) {
  return pair_labels(as_labeled(samples), registry);
}

namespace detail {

struct ValueRef {
  std::size_t category = 0;
  Stance stance = Stance::value;
};

// Draws `k` distinct (category, stance) values from categories whose index
// is not excluded.
inline std::vector<ValueRef> draw_unrelated_values(const Registry& registry,
                                                   const std::vector<bool>& excluded, std::size_t k,
                                                   Rng& rng) {
  std::vector<ValueRef> choices;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (excluded[i]) continue;
    choices.push_back({i, Stance::value});
    choices.push_back({i, Stance::counter_value});
  }
  if (choices.size() < k) {
    throw InputError("only " + std::to_string(choices.size()) + " unrelated values available, need " +
                     std::to_string(k));
  }
  for (std::size_t i = 0; i < k; ++i) std::swap(choices[i], choices[i + rng.below(choices.size() - i)]);
  choices.resize(k);
  return choices;
}

inline Triplet na_triplet(const std::string& content, const std::string& content_category,
                          const ValueCategory& value_category, Stance stance) {
  return {content, value_category.text(stance), Label::na, value_category.id, content_category, stance,
          Origin::synthetic_na};
}

}  // namespace detail

// For each content, `per_content` distinct values drawn uniformly from the
// value and counter-value of every other category, labeled na.
inline std::vector<Triplet> synthesize_na(const std::vector<LabeledContent>& contents, const Registry& registry,
                                          std::size_t per_content, std::uint64_t seed) {
  if (registry.size() < 2) throw InputError("na synthesis needs at least two categories");
  Rng rng(seed);
  std::vector<Triplet> out;
  out.reserve(contents.size() * per_content);
  std::vector<bool> excluded(registry.size(), false);
  for (const auto& c : contents) {
    const std::size_t own = registry.position(c.category_id);
    excluded[own] = true;
    for (const auto& ref : detail::draw_unrelated_values(registry, excluded, per_content, rng)) {
      out.push_back(detail::na_triplet(c.content, c.category_id, registry.categories()[ref.category], ref.stance));
    }
    excluded[own] = false;
  }
  return out;
}

inline std::vector<Triplet> synthesize_na(const std::vector<GeneratedSample>& samples, const Registry& registry,
                                          std::size_t per_content, std::uint64_t seed) {
  return synthesize_na(as_labeled(samples), registry, per_content, seed);
}

struct SplitRatio {
  std::size_t train = 4;
  std::size_t val = 1;
};

// Splits by distinct content string so no content appears on both sides.
// Input order is preserved within each side.
inline std::pair<std::vector<Triplet>, std::vector<Triplet>> split_train_val(const std::vector<Triplet>& triplets,
                                                                             SplitRatio ratio, std::uint64_t seed) {
  if (ratio.train == 0 || ratio.val == 0) throw ConfigError("split ratio parts must be positive");
  std::vector<std::string> contents;
  std::unordered_set<std::string> seen;
  for (const auto& t : triplets) {
    if (seen.insert(t.content).second) contents.push_back(t.content);
  }
  if (contents.size() < 2) throw InputError("need at least two distinct contents to split");

  Rng rng(seed);
  rng.shuffle(contents);
  const double share = static_cast<double>(ratio.val) / static_cast<double>(ratio.train + ratio.val);
  auto n_val = static_cast<std::size_t>(std::llround(share * static_cast<double>(contents.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, contents.size() - 1);
  const std::unordered_set<std::string> val_contents(contents.begin(), contents.begin() + n_val);

  std::pair<std::vector<Triplet>, std::vector<Triplet>> out;
  for (const auto& t : triplets) (val_contents.count(t.content) ? out.second : out.first).push_back(t);
  return out;
}

struct HumanContent {
  std::string content;
  std::vector<std::string> categories;
};

// Per (content, owned category): sexist, non_sexist and one na triplet whose
// value comes from a category the content does not carry.
inline std::vector<Triplet> build_test_set(const std::vector<HumanContent>& human_data, const Registry& registry,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Triplet> out;
  std::vector<bool> owned(registry.size(), false);
  for (const auto& h : human_data) {
    if (h.categories.empty()) throw InputError("human content without categories: " + h.content);
    std::fill(owned.begin(), owned.end(), false);
    for (const auto& id : h.categories) owned[registry.position(id)] = true;
    if (std::all_of(owned.begin(), owned.end(), [](bool b) { return b; })) {
      throw InputError("human content covers every category, no na value possible: " + h.content);
    }
    for (const auto& id : h.categories) {
      const auto& cat = registry.at(id);
      out.push_back({h.content, cat.value, Label::sexist, id, id, Stance::value, Origin::human});
      out.push_back({h.content, cat.counter_value, Label::non_sexist, id, id, Stance::counter_value, Origin::human});
      const auto ref = detail::draw_unrelated_values(registry, owned, 1, rng).front();
      auto na = detail::na_triplet(h.content, id, registry.categories()[ref.category], ref.stance);
      na.origin = Origin::human;
      out.push_back(std::move(na));
    }
  }
  return out;
}

struct DatasetBundle {
  std::vector<Triplet> train;
  std::vector<Triplet> val;
  std::vector<Triplet> test;
  std::vector<std::string> holdout_categories;
  std::uint64_t build_seed = 0;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

struct BundleInputs {
  std::vector<Triplet> train_pool;  // paired + na triplets, before the split
  std::vector<Triplet> test;
  std::uint64_t build_seed = 0;
};

inline bool touches(const Triplet& t, const std::unordered_set<std::string>& ids) {
  return ids.count(t.category_id) || ids.count(t.content_category_id);
}

// Drops every train-side triplet touching a held-out category, keeps only
// test triplets whose content category is held out, then splits.
inline DatasetBundle apply_holdout(const BundleInputs& inputs, const std::vector<std::string>& holdout,
                                   const Registry& registry, SplitRatio ratio = {}) {
  if (holdout.empty()) throw ConfigError("apply_holdout needs a non-empty holdout set");
  const std::unordered_set<std::string> ids(holdout.begin(), holdout.end());
  for (const auto& id : ids) {
    if (!registry.contains(id)) throw ConfigError("unknown holdout category '" + id + "'");
  }
  if (ids.size() >= registry.size()) throw ConfigError("holdout covers every category");

  std::vector<Triplet> pool;
  for (const auto& t : inputs.train_pool) {
    if (!touches(t, ids)) pool.push_back(t);
  }
  DatasetBundle bundle;
  std::tie(bundle.train, bundle.val) = split_train_val(pool, ratio, inputs.build_seed);
  for (const auto& t : inputs.test) {
    if (ids.count(t.content_category_id)) bundle.test.push_back(t);
  }
  bundle.holdout_categories = holdout;
  bundle.build_seed = inputs.build_seed;
  return bundle;
}

struct DatasetConfig {
  std::size_t na_per_content = 1;
  SplitRatio ratio;
  std::vector<std::string> holdout;
  std::uint64_t build_seed = 0;
  std::size_t n_per_category = 200;
  bool include_seed_pool = true;
};

// First `n` samples per category, split as evenly as possible between the
// two stances (a short stance leaves its quota to the other).
inline std::vector<GeneratedSample> cap_per_category(const std::vector<GeneratedSample>& samples, std::size_t n) {
  std::map<std::string, std::array<std::size_t, 2>> available;
  for (const auto& s : samples) ++available[s.category_id][s.stance == Stance::value ? 0 : 1];
  std::map<std::string, std::array<std::size_t, 2>> quota;
  for (const auto& [id, have] : available) {
    std::size_t q_value = std::min(have[0], (n + 1) / 2);
    std::size_t q_counter = std::min(have[1], n - q_value);
    q_value = std::min(have[0], n - q_counter);
    quota[id] = {q_value, q_counter};
  }
  std::vector<GeneratedSample> out;
  for (const auto& s : samples) {
    auto& q = quota[s.category_id][s.stance == Stance::value ? 0 : 1];
    if (q > 0) {
      --q;
      out.push_back(s);
    }
  }
  return out;
}

struct BuildStats {
  std::size_t generated_used = 0;
  std::size_t seed_pool_used = 0;
  std::size_t human_excluded_as_seed = 0;
};

// Full construction: cap, pair, na, split, test conversion and holdout.
inline DatasetBundle build_bundle(const std::vector<GeneratedSample>& generated, const SeedPool& pool,
                                  const std::vector<HumanContent>& human, const Registry& registry,
                                  const DatasetConfig& cfg, BuildStats* stats = nullptr) {
  const std::unordered_set<std::string> held(cfg.holdout.begin(), cfg.holdout.end());
  const Registry seen_registry = cfg.holdout.empty() ? registry : registry.without(cfg.holdout);

  std::vector<LabeledContent> contents;
  for (auto& c : as_labeled(cap_per_category(generated, cfg.n_per_category))) {
    if (!held.count(c.category_id)) contents.push_back(std::move(c));
  }
  const std::size_t n_generated = contents.size();
  if (cfg.include_seed_pool) {
    for (auto& c : as_labeled(pool)) {
      if (!held.count(c.category_id)) contents.push_back(std::move(c));
    }
  }

  BundleInputs inputs;
  inputs.build_seed = cfg.build_seed;
  inputs.train_pool = pair_labels(contents, seen_registry);
  auto na = synthesize_na(contents, seen_registry, cfg.na_per_content, derive_seed(cfg.build_seed, "na"));
  inputs.train_pool.insert(inputs.train_pool.end(), na.begin(), na.end());

  std::vector<HumanContent> test_source;
  std::size_t excluded = 0;
  for (const auto& h : human) {
    if (pool.contains_normalized(text::normalize(h.content))) {
      ++excluded;
    } else {
      test_source.push_back(h);
    }
  }
  inputs.test = build_test_set(test_source, registry, derive_seed(cfg.build_seed, "test"));

  if (stats) *stats = {n_generated, contents.size() - n_generated, excluded};

  if (!cfg.holdout.empty()) return apply_holdout(inputs, cfg.holdout, registry, cfg.ratio);
  DatasetBundle bundle;
  std::tie(bundle.train, bundle.val) = split_train_val(inputs.train_pool, cfg.ratio, cfg.build_seed);
  bundle.test = std::move(inputs.test);
  bundle.build_seed = cfg.build_seed;
  return bundle;
}

inline ordered_json to_json(const Triplet& t) {
  return {{"content", t.content},
          {"value", t.value},
          {"label", std::string(to_string(t.label))},
          {"category_id", t.category_id},
          {"content_category_id", t.content_category_id},
          {"stance", std::string(to_string(t.stance))},
          {"origin", std::string(to_string(t.origin))}};
}

inline Triplet triplet_from_json(const json& obj) {
  Triplet t;
  t.content = obj.at("content").get<std::string>();
  t.value = obj.at("value").get<std::string>();
  t.label = parse_label(obj.at("label").get<std::string>());
  t.category_id = obj.at("category_id").get<std::string>();
  t.content_category_id = obj.at("content_category_id").get<std::string>();
  t.stance = parse_stance(obj.at("stance").get<std::string>());
  t.origin = parse_origin(obj.at("origin").get<std::string>());
  return t;
}

inline std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  std::vector<Triplet> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t) { out.push_back(triplet_from_json(obj)); });
  return out;
}

inline std::string triplets_to_jsonl(const std::vector<Triplet>& triplets) {
  return to_jsonl(triplets, [](const Triplet& t) { return to_json(t); });
}

inline std::vector<HumanContent> load_human_data(const std::filesystem::path& path, const Registry& registry) {
  std::vector<HumanContent> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    HumanContent h;
    h.content = obj.at("content").get<std::string>();
    h.categories = obj.at("categories").get<std::vector<std::string>>();
    for (const auto& id : h.categories) {
      if (!registry.contains(id)) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": unknown category id '" + id + "'");
      }
    }
    out.push_back(std::move(h));
  });
  return out;
}

inline ordered_json to_json(const HumanContent& h) {
  return {{"content", h.content}, {"categories", h.categories}};
}

// Per-split counts by label, content category and origin.
inline ordered_json split_counts(const std::vector<Triplet>& triplets) {
  std::map<std::string, std::size_t> by_label, by_category, by_origin;
  for (auto l : kLabelOrder) by_label[std::string(to_string(l))] = 0;
  std::unordered_set<std::string> contents;
  for (const auto& t : triplets) {
    ++by_label[std::string(to_string(t.label))];
    ++by_category[t.content_category_id];
    ++by_origin[std::string(to_string(t.origin))];
    contents.insert(t.content);
  }
  return {{"triplets", triplets.size()},
          {"contents", contents.size()},
          {"label", by_label},
          {"content_category", by_category},
          {"origin", by_origin}};
}

}  // namespace valign

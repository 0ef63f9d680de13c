#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "valign/backend.hpp"
#include "valign/dataset.hpp"

// Synthetic stand-ins for LLM output and human-labeled data. Nothing here is
// human-labeled; it exists so the full pipeline runs offline.
namespace valign::mock {

inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words = {
      "women", "men", "she", "he", "they", "should", "always", "never", "really", "just",
      "think", "every", "because", "about", "their", "work", "home", "people", "time", "life",
      "girls", "boys", "know", "said", "today", "still", "again", "here", "there", "maybe"};
  return words;
}

// Pseudo-word banks, one per category, pairwise disjoint. Each bank is drawn
// from a stream seeded by the category id; words already taken by an earlier
// category are skipped.
inline std::map<std::string, std::vector<std::string>> category_word_banks(const Registry& registry,
                                                                           std::size_t n = 48) {
  static const std::vector<std::string> syllables = {
      "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu", "na", "pe", "ri", "so", "tu",
      "va", "we", "xi", "yo", "za", "bro", "cla", "dre", "fli", "gro", "ple", "sti", "tra", "vor", "zen"};
  std::map<std::string, std::vector<std::string>> banks;
  std::set<std::string> taken;
  for (const auto& c : registry.categories()) {
    Rng rng(fnv1a64(c.id));
    auto& out = banks[c.id];
    while (out.size() < n) {
      std::string w;
      const std::size_t parts = 2 + rng.below(2);
      for (std::size_t i = 0; i < parts; ++i) w += rng.pick(syllables);
      if (taken.insert(w).second) out.push_back(std::move(w));
    }
  }
  return banks;
}

class Vocab {
 public:
  explicit Vocab(const Registry& registry) : banks_(category_word_banks(registry)) {}

  const std::vector<std::string>& words(const std::string& category_id) const {
    auto it = banks_.find(category_id);
    if (it == banks_.end()) throw InputError("mock vocabulary has no category '" + category_id + "'");
    return it->second;
  }

 private:
  std::map<std::string, std::vector<std::string>> banks_;
};

// 6-10 tokens: category words from each listed category mixed with common
// words, capitalized, ending in a period.
inline std::string sentence(const Vocab& vocab, const std::vector<std::string>& category_ids, Rng& rng) {
  std::vector<std::string> tokens;
  const std::size_t n_cat = 3 + rng.below(3);
  for (std::size_t i = 0; i < n_cat; ++i) tokens.push_back(rng.pick(vocab.words(category_ids[i % category_ids.size()])));
  const std::size_t n_common = 3 + rng.below(3);
  for (std::size_t i = 0; i < n_common; ++i) tokens.push_back(rng.pick(common_words()));
  rng.shuffle(tokens);
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  out.push_back('.');
  return out;
}

inline SeedPool make_seed_pool(const Registry& registry, std::size_t per_pool = 10, std::uint64_t seed = 1) {
  const Vocab vocab(registry);
  SeedPool pool;
  for (const auto& c : registry.categories()) {
    for (auto stance : {Stance::value, Stance::counter_value}) {
      Rng rng(derive_seed(seed, c.id + "/" + std::string(to_string(stance))));
      std::set<std::string> used;
      while (used.size() < per_pool) {
        auto s = sentence(vocab, {c.id}, rng);
        if (used.insert(text::normalize(s)).second) pool.add({s, c.id, stance});
      }
    }
  }
  return pool;
}

// Human-style test contents; a `multi_label_rate` share carry two categories.
inline std::vector<HumanContent> make_human_corpus(const Registry& registry, std::size_t n_contents,
                                                   double multi_label_rate = 0.1, std::uint64_t seed = 2) {
  const Vocab vocab(registry);
  const auto ids = registry.ids();
  Rng rng(seed);
  std::vector<HumanContent> out;
  std::set<std::string> used;
  while (out.size() < n_contents) {
    HumanContent h;
    h.categories.push_back(ids[out.size() % ids.size()]);
    if (ids.size() > 2 && rng.bernoulli(multi_label_rate)) {
      std::string other;
      do {
        other = rng.pick(ids);
      } while (other == h.categories.front());
      h.categories.push_back(other);
    }
    h.content = sentence(vocab, h.categories, rng);
    if (used.insert(text::normalize(h.content)).second) out.push_back(std::move(h));
  }
  return out;
}

struct MockConfig {
  std::uint64_t seed = 0;
  double duplicate_rate = 0.0;  // lines drawn from a tiny stock set
  double short_rate = 0.0;      // two-word lines
  double copy_rate = 0.0;       // verbatim copies of a prompt example
  std::size_t lines_per_completion = 5;
  double abstain_rate = 0.1;    // unparseable answers to label prompts
  std::string model_name = "mock-template-filler";
};

// Deterministic completion backend: output is a pure function of the prompt,
// the request parameters and the configured seed.
class MockBackend final : public Backend {
 public:
  MockBackend(const Registry& registry, MockConfig cfg) : registry_(registry), vocab_(registry), cfg_(std::move(cfg)) {}

  GenResult complete(const GenRequest& request, std::size_t request_index = 0) const override {
    request.validate();
    GenResult out;
    out.backend_id = backend_id();
    out.model_name = model_name();
    out.request_index = request_index;
    const std::string params = std::to_string(request.top_p) + "|" + std::to_string(request.temperature) + "|" +
                               std::to_string(request.max_tokens) + "|" + std::to_string(request.n_samples);
    const std::uint64_t base = derive_seed(cfg_.seed, fnv1a64(request.prompt) ^ mix64(fnv1a64(params)));
    const bool label_prompt = text::trim(request.prompt).ends_with("Label:");
    for (std::size_t j = 0; j < request.n_samples; ++j) {
      Rng rng(derive_seed(base, j));
      out.completions.push_back(label_prompt ? label_answer(rng) : generation(request.prompt, rng));
    }
    return out;
  }

  std::string backend_id() const override { return "mock"; }
  std::string model_name() const override { return cfg_.model_name; }

 private:
  std::string label_answer(Rng& rng) const {
    if (rng.bernoulli(cfg_.abstain_rate)) return " unsure\n";
    static const std::vector<std::string> words = {" Sexist\n", " Non-Sexist\n", " NA\n"};
    return rng.pick(words);
  }

  // The category whose value or counter-value text appears in the prompt
  // (longest match wins).
  std::pair<std::string, Stance> detect(const std::string& prompt) const {
    std::pair<std::string, Stance> best{"", Stance::value};
    std::size_t best_len = 0;
    for (const auto& c : registry_.categories()) {
      for (auto s : {Stance::value, Stance::counter_value}) {
        const auto& t = c.text(s);
        if (t.size() > best_len && prompt.find(t) != std::string::npos) {
          best = {c.id, s};
          best_len = t.size();
        }
      }
    }
    return best;
  }

  std::string generation(const std::string& prompt, Rng& rng) const {
    auto [category, stance] = detect(prompt);
    if (category.empty()) category = registry_.categories().front().id;
    auto shots = extract_contents(prompt);
    static const std::vector<std::string> short_lines = {"I agree", "So true", "Not really", "Well said"};

    Rng stock_rng(derive_seed(cfg_.seed, category + "/" + std::string(to_string(stance)) + "/stock"));
    std::vector<std::string> stock;
    for (int i = 0; i < 3; ++i) stock.push_back(sentence(vocab_, {category}, stock_rng));

    std::string out;
    for (std::size_t l = 0; l < cfg_.lines_per_completion; ++l) {
      const double u = rng.uniform();
      std::string line;
      if (u < cfg_.duplicate_rate) {
        line = rng.pick(stock);
      } else if (u < cfg_.duplicate_rate + cfg_.short_rate) {
        line = rng.pick(short_lines);
      } else if (u < cfg_.duplicate_rate + cfg_.short_rate + cfg_.copy_rate && !shots.empty()) {
        line = rng.pick(shots);
      } else {
        line = sentence(vocab_, {category}, rng);
      }
      out += (l == 0 ? " " : "Content: ") + line + "\n";
    }
    return out;
  }

  Registry registry_;
  Vocab vocab_;
  MockConfig cfg_;
};

}  // namespace valign::mock

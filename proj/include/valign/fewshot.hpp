#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "valign/backend.hpp"
#include "valign/judge.hpp"

namespace valign {

inline std::string fewshot_label_word(Label l) {
  switch (l) {
    case Label::sexist: return "Sexist";
    case Label::non_sexist: return "Non-Sexist";
    case Label::na: return "NA";
  }
  return "NA";
}

inline std::string fewshot_item(const std::string& value, const std::string& content) {
  return "Predict a Label for the Content based on the given Value: " + value + ". Content: " + content + " Label:";
}

// Case-insensitive; the first whitespace token that, with surrounding
// punctuation stripped, is one of sexist / non-sexist / na.
inline std::optional<Label> parse_label_completion(std::string_view completion) {
  for (const auto& tok : text::split_whitespace(completion)) {
    const auto word = text::to_lower(text::strip_punct(tok));
    if (word == "sexist") return Label::sexist;
    if (word == "non-sexist") return Label::non_sexist;
    if (word == "na") return Label::na;
  }
  return std::nullopt;
}

struct FewshotConfig {
  std::size_t shots_per_label = 5;
  std::size_t repeats = 5;
  double top_p = 0.9;
  double temperature = 1.0;
  std::size_t max_tokens = 5;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
};

struct FewshotOutcome {
  // predictions[repeat][item]; empty optional is an abstention.
  std::vector<std::vector<std::optional<Label>>> predictions;
  std::vector<std::size_t> all_abstained;  // items no repeat could parse
  std::vector<BatchFailure> failures;
};

// Few-shot block: `shots_per_label` examples for each label, shuffled.
inline std::string build_fewshot_prompt(const std::vector<std::vector<const Triplet*>>& by_label,
                                        const Triplet& item, std::size_t shots_per_label, Rng& rng) {
  std::vector<const Triplet*> shots;
  for (const auto& bucket : by_label) {
    std::vector<const Triplet*> pool = bucket;
    const std::size_t k = std::min(shots_per_label, pool.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    shots.insert(shots.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  rng.shuffle(shots);
  std::string prompt;
  for (const auto* s : shots) prompt += fewshot_item(s->value, s->content) + " " + fewshot_label_word(s->label) + "\n";
  prompt += fewshot_item(item.value, item.content);
  return prompt;
}

inline FewshotOutcome fewshot_classify(const Backend& backend, const std::vector<Triplet>& exemplars,
                                       const std::vector<Triplet>& test, const FewshotConfig& cfg) {
  std::vector<std::vector<const Triplet*>> by_label(kNumLabels);
  for (const auto& t : exemplars) by_label[index_of(t.label)].push_back(&t);
  for (auto l : kLabelOrder) {
    if (by_label[index_of(l)].empty()) throw InputError("few-shot exemplars lack label " + std::string(to_string(l)));
  }

  FewshotOutcome out;
  std::vector<std::size_t> parsed_count(test.size(), 0);
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    std::vector<GenRequest> requests;
    requests.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      Rng rng(derive_seed(derive_seed(cfg.seed, r), i));
      GenRequest req;
      req.prompt = build_fewshot_prompt(by_label, test[i], cfg.shots_per_label, rng);
      req.top_p = cfg.top_p;
      req.temperature = cfg.temperature;
      req.max_tokens = cfg.max_tokens;
      req.stop_sequences = {"\n"};
      requests.push_back(std::move(req));
    }
    auto batch = batch_complete(backend, requests, cfg.parallelism, r * test.size());
    out.failures.insert(out.failures.end(), batch.failures.begin(), batch.failures.end());
    std::vector<std::optional<Label>> labels(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto& res = batch.results[i];
      if (res && !res->completions.empty()) labels[i] = parse_label_completion(res->completions.front());
      if (labels[i]) ++parsed_count[i];
    }
    out.predictions.push_back(std::move(labels));
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (parsed_count[i] == 0) out.all_abstained.push_back(i);
  }
  return out;
}

}  // namespace valign

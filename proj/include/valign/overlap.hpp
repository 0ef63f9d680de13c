#pragma once

#include <algorithm>
#include <atomic>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "valign/dataset.hpp"

namespace valign {

using Vocabulary = std::set<std::string>;

// Lowercased whitespace tokens with leading/trailing punctuation removed.
// Differs from the judge featurizer, which keeps punctuation.
inline Vocabulary vocabulary(const std::vector<std::string>& texts) {
  Vocabulary vocab;
  for (const auto& t : texts) {
    for (const auto& tok : text::split_whitespace(t)) {
      auto word = text::strip_punct(tok);
      if (!word.empty()) vocab.insert(text::to_lower(word));
    }
  }
  return vocab;
}

inline Vocabulary vocabulary(const std::string& text) { return vocabulary(std::vector<std::string>{text}); }

inline std::size_t intersection_size(const Vocabulary& a, const Vocabulary& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  std::size_t n = 0;
  for (const auto& w : small) n += large.count(w);
  return n;
}

inline double jaccard_overlap(const Vocabulary& a, const Vocabulary& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// |a ∩ b| / |a|; 0 when a is empty.
inline double containment(const Vocabulary& a, const Vocabulary& b) {
  return a.empty() ? 0.0 : static_cast<double>(intersection_size(a, b)) / static_cast<double>(a.size());
}

inline constexpr double kNearDuplicateThreshold = 0.8;

// Fraction of generated texts g for which some test text t has
// |V_g ∩ V_t| / |V_g| >= threshold.
inline double near_duplicate_rate(const std::vector<std::string>& generated, const std::vector<std::string>& test,
                                  double threshold = kNearDuplicateThreshold, std::size_t parallelism = 1) {
  if (generated.empty() || test.empty()) throw InputError("near-duplicate scan needs non-empty inputs");

  std::unordered_map<std::string, std::uint32_t> ids;
  auto encode = [&](const std::string& t) {
    std::vector<std::uint32_t> out;
    for (const auto& w : vocabulary(t)) out.push_back(ids.emplace(w, static_cast<std::uint32_t>(ids.size())).first->second);
    std::sort(out.begin(), out.end());
    return out;
  };
  std::set<std::vector<std::uint32_t>> unique_test;
  for (const auto& t : test) unique_test.insert(encode(t));
  const std::vector<std::vector<std::uint32_t>> test_vocab(unique_test.begin(), unique_test.end());
  std::vector<std::vector<std::uint32_t>> gen_vocab;
  gen_vocab.reserve(generated.size());
  for (const auto& g : generated) gen_vocab.push_back(encode(g));

  auto is_near_dup = [&](const std::vector<std::uint32_t>& g) {
    if (g.empty()) return false;
    for (const auto& t : test_vocab) {
      std::size_t inter = 0;
      for (auto i = g.begin(), j = t.begin(); i != g.end() && j != t.end();) {
        if (*i < *j) {
          ++i;
        } else if (*j < *i) {
          ++j;
        } else {
          ++inter, ++i, ++j;
        }
      }
      if (static_cast<double>(inter) / static_cast<double>(g.size()) >= threshold) return true;
    }
    return false;
  };

  std::vector<char> hit(gen_vocab.size(), 0);
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, gen_vocab.size()));
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < gen_vocab.size(); i = next++) hit[i] = is_near_dup(gen_vocab[i]) ? 1 : 0;
      });
    }
  }
  const auto count = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
  return static_cast<double>(count) / static_cast<double>(generated.size());
}

struct CategoryOverlap {
  std::vector<std::string> category_ids;  // first-appearance order
  std::vector<std::vector<double>> matrix;
};

// Pairwise Jaccard of per-category vocabularies; unit diagonal.
inline CategoryOverlap category_overlap_matrix(const std::vector<GeneratedSample>& generated) {
  CategoryOverlap out;
  std::unordered_map<std::string, std::size_t> pos;
  std::vector<std::vector<std::string>> texts;
  for (const auto& s : generated) {
    auto [it, fresh] = pos.emplace(s.category_id, out.category_ids.size());
    if (fresh) {
      out.category_ids.push_back(s.category_id);
      texts.emplace_back();
    }
    texts[it->second].push_back(s.content);
  }
  std::vector<Vocabulary> vocab;
  for (const auto& t : texts) vocab.push_back(vocabulary(t));
  const std::size_t n = vocab.size();
  out.matrix.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.matrix[i][j] = out.matrix[j][i] = jaccard_overlap(vocab[i], vocab[j]);
  }
  return out;
}

struct OverlapReport {
  double dataset_jaccard = 0.0;
  double dataset_containment = 0.0;       // generated vocabulary found in test
  double test_containment = 0.0;          // test vocabulary found in generated
  double near_duplicate_rate = 0.0;
  double threshold = kNearDuplicateThreshold;
  CategoryOverlap categories;
};

inline OverlapReport analyze_overlap(const std::vector<GeneratedSample>& generated, const std::vector<Triplet>& test,
                                     double threshold = kNearDuplicateThreshold, std::size_t parallelism = 1) {
  std::vector<std::string> gen_texts;
  for (const auto& g : generated) gen_texts.push_back(g.content);
  std::vector<std::string> test_texts;
  std::set<std::string> seen;
  for (const auto& t : test) {
    if (seen.insert(t.content).second) test_texts.push_back(t.content);
  }
  const auto vg = vocabulary(gen_texts);
  const auto vt = vocabulary(test_texts);
  OverlapReport r;
  r.dataset_jaccard = jaccard_overlap(vg, vt);
  r.dataset_containment = containment(vg, vt);
  r.test_containment = containment(vt, vg);
  r.threshold = threshold;
  r.near_duplicate_rate = near_duplicate_rate(gen_texts, test_texts, threshold, parallelism);
  r.categories = category_overlap_matrix(generated);
  return r;
}

inline ordered_json to_json(const OverlapReport& r) {
  return {{"dataset_overlap",
           {{"jaccard", r.dataset_jaccard},
            {"containment_generated_in_test", r.dataset_containment},
            {"containment_test_in_generated", r.test_containment}}},
          {"near_duplicate_rate", r.near_duplicate_rate},
          {"near_duplicate_threshold", r.threshold},
          {"category_ids", r.categories.category_ids},
          {"category_matrix", r.categories.matrix}};
}

}  // namespace valign

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "valign/backend.hpp"
#include "valign/prompt.hpp"

namespace valign {

struct Provenance {
  std::string backend_id;
  std::string model_name;
  int template_id = kDefaultTemplate;
  std::uint64_t prompt_seed = 0;
  std::size_t request_index = 0;
  std::size_t max_tokens = kDefaultMaxTokens;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct GeneratedSample {
  std::string content;
  std::string category_id;
  Stance stance = Stance::value;
  Provenance provenance;

  friend bool operator==(const GeneratedSample&, const GeneratedSample&) = default;
};

inline constexpr std::size_t kMinContentTokens = 3;

struct ExtractRule {
  std::string marker = "Content:";
  std::vector<std::string> stops = {"Value:", "Label:", "Generate"};

  static ExtractRule for_template(int template_id) {
    ExtractRule rule;
    rule.marker = content_marker(template_id);
    if (template_id == 3) {
      rule.stops.push_back("value=");
      rule.stops.push_back("label=");
    }
    return rule;
  }
};

// Splits `raw` on the content marker. Each segment ends before the next
// marker or before the first following line that opens with a stop prefix.
// Text before the first marker is not content.
inline std::vector<std::string> extract_contents(std::string_view raw, const ExtractRule& rule = {}) {
  std::vector<std::string> out;
  std::size_t pos = raw.find(rule.marker);
  while (pos != std::string_view::npos) {
    const std::size_t start = pos + rule.marker.size();
    const std::size_t next = raw.find(rule.marker, start);
    std::string_view segment = raw.substr(start, next == std::string_view::npos ? next : next - start);

    std::size_t line_start = segment.find('\n');
    while (line_start != std::string_view::npos) {
      const auto line = segment.substr(line_start + 1);
      const auto lead = line.find_first_not_of(" \t\r");
      bool stop = false;
      if (lead != std::string_view::npos) {
        for (const auto& s : rule.stops) {
          if (text::starts_with(line.substr(lead), s)) stop = true;
        }
      }
      if (stop) {
        segment = segment.substr(0, line_start);
        break;
      }
      line_start = segment.find('\n', line_start + 1);
    }

    if (auto trimmed = text::trim(segment); !trimmed.empty()) out.emplace_back(trimmed);
    pos = next;
  }
  return out;
}

struct FilterStats {
  std::size_t input = 0;
  std::size_t duplicates = 0;
  std::size_t seed_copies = 0;
  std::size_t too_short = 0;
  std::size_t kept = 0;

  bool balanced() const noexcept { return input == kept + duplicates + seed_copies + too_short; }
};

struct FilterOutcome {
  std::vector<GeneratedSample> kept;
  FilterStats stats;
};

// Applies, in order: drop normalized duplicates within a category (first
// occurrence wins, `prior` counts as already kept), drop normalized copies
// of any seed-pool example, drop items with fewer than three tokens.
inline FilterOutcome filter_samples(const std::vector<GeneratedSample>& candidates, const SeedPool& pool,
                                    const std::unordered_set<std::string>& prior = {}) {
  FilterOutcome out;
  out.stats.input = candidates.size();
  std::unordered_set<std::string> seen;
  for (const auto& c : candidates) {
    const std::string norm = text::normalize(c.content);
    if (prior.count(norm) || !seen.insert(c.category_id + '\x1f' + norm).second) {
      ++out.stats.duplicates;
      continue;
    }
    if (pool.contains_normalized(norm)) {
      ++out.stats.seed_copies;
      continue;
    }
    if (text::count_tokens(c.content) < kMinContentTokens) {
      ++out.stats.too_short;
      continue;
    }
    out.kept.push_back(c);
  }
  out.stats.kept = out.kept.size();
  return out;
}

struct DistillConfig {
  int template_id = kDefaultTemplate;
  std::size_t shots = kDefaultShots;
  double top_p = kDefaultTopP;
  double temperature = kDefaultTemperature;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t samples_per_prompt = 1;
  double expected_yield = 4.0;  // unique samples expected per prompt
  std::size_t round_budget = 20;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
};

struct DistillReport {
  std::string category_id;
  Stance stance = Stance::value;
  std::size_t target = 0;
  std::size_t rounds = 0;
  std::size_t prompts_issued = 0;
  std::size_t completions = 0;
  std::size_t extracted = 0;
  std::size_t over_target = 0;
  FilterStats filter;
  std::vector<BatchFailure> failures;
  bool exhausted = false;
  std::string warning;
};

struct DistillOutcome {
  std::vector<GeneratedSample> samples;
  DistillReport report;
};

// Generates until `target_count` filtered samples exist or the round budget
// runs out. Candidates are merged in request-index order, so the result does
// not depend on `config.parallelism`.
inline DistillOutcome distill_category(const Registry& registry, const SeedPool& pool, const Backend& backend,
                                       const std::string& category_id, Stance stance,
                                       std::size_t target_count, const DistillConfig& config,
                                       const std::unordered_set<std::string>& prior = {}) {
  if (!(config.expected_yield > 0.0)) throw ConfigError("expected_yield must be positive");
  DistillOutcome out;
  auto& rep = out.report;
  rep.category_id = category_id;
  rep.stance = stance;
  rep.target = target_count;
  if (target_count == 0) return out;

  const ExtractRule rule = ExtractRule::for_template(config.template_id);
  const std::uint64_t base_seed =
      derive_seed(config.seed, category_id + "/" + std::string(to_string(stance)));
  std::vector<GeneratedSample> candidates;
  FilterOutcome filtered;

  while (rep.rounds < config.round_budget) {
    const std::size_t remaining = target_count - filtered.kept.size();
    const auto n_prompts =
        static_cast<std::size_t>(std::ceil(static_cast<double>(remaining) / config.expected_yield));
    const auto specs = build_generation_prompts(registry, pool, category_id, stance, n_prompts,
                                                config.template_id, base_seed + rep.prompts_issued,
                                                config.shots);
    std::vector<GenRequest> requests;
    requests.reserve(specs.size());
    for (const auto& spec : specs) {
      GenRequest req;
      req.prompt = render_prompt(spec);
      req.top_p = config.top_p;
      req.temperature = config.temperature;
      req.max_tokens = config.max_tokens;
      req.n_samples = config.samples_per_prompt;
      req.validate();
      requests.push_back(std::move(req));
    }

    auto batch = batch_complete(backend, requests, config.parallelism, rep.prompts_issued);
    ++rep.rounds;
    rep.prompts_issued += requests.size();
    rep.failures.insert(rep.failures.end(), batch.failures.begin(), batch.failures.end());
    if (batch.succeeded() == 0 && !requests.empty()) {
      const auto& first = batch.failures.front();
      throw BackendError(first.kind.value_or(BackendErrorKind::request),
                         "every request of round " + std::to_string(rep.rounds) + " for " + category_id +
                             " failed: " + first.message);
    }

    for (std::size_t i = 0; i < batch.results.size(); ++i) {
      const auto& result = batch.results[i];
      if (!result) continue;
      for (const auto& completion : result->completions) {
        ++rep.completions;
        for (auto& content : extract_contents(rule.marker + completion, rule)) {
          ++rep.extracted;
          candidates.push_back(GeneratedSample{
              std::move(content), category_id, stance,
              Provenance{result->backend_id, result->model_name, config.template_id,
                         specs[i].rng_seed, result->request_index, config.max_tokens}});
        }
      }
    }

    filtered = filter_samples(candidates, pool, prior);
    if (filtered.kept.size() >= target_count) break;
  }

  rep.filter = filtered.stats;
  if (filtered.kept.size() > target_count) {
    rep.over_target = filtered.kept.size() - target_count;
    filtered.kept.resize(target_count);
  }
  if (filtered.kept.size() < target_count) {
    rep.exhausted = true;
    rep.warning = "round budget of " + std::to_string(config.round_budget) + " exhausted for (" +
                  category_id + ", " + std::string(to_string(stance)) + "): " +
                  std::to_string(filtered.kept.size()) + "/" + std::to_string(target_count) + " samples";
  }
  out.samples = std::move(filtered.kept);
  return out;
}

inline ordered_json to_json(const GeneratedSample& s) {
  const auto& p = s.provenance;
  return {{"content", s.content},
          {"category_id", s.category_id},
          {"stance", std::string(to_string(s.stance))},
          {"provenance",
           {{"backend_id", p.backend_id},
            {"model_name", p.model_name},
            {"template_id", p.template_id},
            {"prompt_seed", p.prompt_seed},
            {"request_index", p.request_index},
            {"max_tokens", p.max_tokens}}}};
}

inline GeneratedSample generated_sample_from_json(const json& obj) {
  GeneratedSample s;
  s.content = obj.at("content").get<std::string>();
  s.category_id = obj.at("category_id").get<std::string>();
  s.stance = parse_stance(obj.at("stance").get<std::string>());
  if (auto it = obj.find("provenance"); it != obj.end()) {
    const auto& p = *it;
    s.provenance.backend_id = p.value("backend_id", "");
    s.provenance.model_name = p.value("model_name", "");
    s.provenance.template_id = p.value("template_id", kDefaultTemplate);
    s.provenance.prompt_seed = p.value("prompt_seed", std::uint64_t{0});
    s.provenance.request_index = p.value("request_index", std::size_t{0});
    s.provenance.max_tokens = p.value("max_tokens", kDefaultMaxTokens);
  }
  return s;
}

inline std::vector<GeneratedSample> load_generated(const std::filesystem::path& path) {
  std::vector<GeneratedSample> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t) { out.push_back(generated_sample_from_json(obj)); });
  return out;
}

inline ordered_json to_json(const FilterStats& s) {
  return {{"input", s.input},
          {"duplicates", s.duplicates},
          {"seed_copies", s.seed_copies},
          {"too_short", s.too_short},
          {"kept", s.kept}};
}

inline ordered_json to_json(const DistillReport& r) {
  ordered_json failures = ordered_json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"index", f.index},
                        {"kind", f.kind ? to_string(*f.kind) : "other"},
                        {"message", f.message}});
  }
  return {{"category_id", r.category_id},
          {"stance", std::string(to_string(r.stance))},
          {"target", r.target},
          {"kept", r.filter.kept - r.over_target},
          {"rounds", r.rounds},
          {"prompts_issued", r.prompts_issued},
          {"completions", r.completions},
          {"extracted", r.extracted},
          {"drops", to_json(r.filter)},
          {"over_target", r.over_target},
          {"failures", failures},
          {"exhausted", r.exhausted},
          {"warning", r.warning}};
}

}  // namespace valign

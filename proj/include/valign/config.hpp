#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "valign/dataset.hpp"
#include "valign/distiller.hpp"
#include "valign/fewshot.hpp"
#include "valign/http_backend.hpp"
#include "valign/judge.hpp"
#include "valign/mock.hpp"
#include "valign/overlap.hpp"

namespace valign {

namespace fs = std::filesystem;

struct BackendSettings {
  std::string kind = "mock";  // mock | http
  std::string url;
  std::string model_name;
  std::size_t parallelism = 4;
  RetryPolicy retry;
  std::chrono::seconds timeout{60};
  mock::MockConfig mock;
};

struct GenerationSettings {
  DistillConfig distill;
  std::size_t target_per_category = 200;
  std::map<std::string, std::size_t> target_overrides;  // per-category caps
};

struct ClassifierSettings {
  std::size_t feature_dim = kDefaultFeatureDim;
  std::uint64_t hash_seed = kDefaultHashSeed;
  std::vector<double> learning_rates = {1e-2, 5e-2};
  std::vector<std::size_t> batch_sizes = {32, 64};
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
};

struct EvalSettings {
  std::string source = "classifier";  // classifier | random | fewshot | external
  fs::path preds_path;
  FewshotConfig fewshot;
};

struct PipelineConfig {
  fs::path registry_path;
  fs::path seed_pool_path;
  fs::path human_data_path;
  fs::path output_dir;
  BackendSettings backend;
  GenerationSettings generation;
  DatasetConfig dataset;
  ClassifierSettings classifier;
  EvalSettings eval;
  double analyze_threshold = kNearDuplicateThreshold;
  std::size_t analyze_parallelism = 1;

  json echo;  // effective configuration as written (paths unresolved)
};

inline json default_config_json() {
  const PipelineConfig d;
  const auto& g = d.generation.distill;
  const auto& m = d.backend.mock;
  const auto& c = d.classifier;
  const auto& f = d.eval.fewshot;
  return {
      {"registry_path", "values/sexism.json"},
      {"seed_pool_path", "data/mock_seed_pool.jsonl"},
      {"human_data_path", "data/mock_human.jsonl"},
      {"output_dir", "out"},
      {"backend",
       {{"kind", d.backend.kind},
        {"url", ""},
        {"model_name", ""},
        {"parallelism", d.backend.parallelism},
        {"timeout_s", d.backend.timeout.count()},
        {"retry",
         {{"max_attempts", d.backend.retry.max_attempts},
          {"base_delay_ms", d.backend.retry.base_delay.count()},
          {"max_delay_ms", d.backend.retry.max_delay.count()},
          {"jitter", d.backend.retry.jitter}}},
        {"mock",
         {{"seed", m.seed},
          {"duplicate_rate", m.duplicate_rate},
          {"short_rate", m.short_rate},
          {"copy_rate", m.copy_rate},
          {"lines_per_completion", m.lines_per_completion},
          {"abstain_rate", m.abstain_rate},
          {"model_name", m.model_name}}}}},
      {"generation",
       {{"template_id", g.template_id},
        {"shots", g.shots},
        {"top_p", g.top_p},
        {"temperature", g.temperature},
        {"max_tokens", g.max_tokens},
        {"samples_per_prompt", g.samples_per_prompt},
        {"expected_yield", g.expected_yield},
        {"round_budget", g.round_budget},
        {"seed", g.seed},
        {"target_per_category", d.generation.target_per_category},
        {"target_overrides", json::object()}}},
      {"dataset",
       {{"na_per_content", d.dataset.na_per_content},
        {"split_ratio", {d.dataset.ratio.train, d.dataset.ratio.val}},
        {"holdout", json::array()},
        {"build_seed", d.dataset.build_seed},
        {"n_per_category", d.dataset.n_per_category},
        {"include_seed_pool", d.dataset.include_seed_pool}}},
      {"classifier",
       {{"feature_dim", c.feature_dim},
        {"hash_seed", c.hash_seed},
        {"learning_rates", c.learning_rates},
        {"batch_sizes", c.batch_sizes},
        {"max_epochs", c.max_epochs},
        {"patience", c.patience},
        {"seeds", c.seeds}}},
      {"eval",
       {{"source", d.eval.source},
        {"preds_path", ""},
        {"fewshot",
         {{"shots_per_label", f.shots_per_label},
          {"repeats", f.repeats},
          {"top_p", f.top_p},
          {"temperature", f.temperature},
          {"max_tokens", f.max_tokens},
          {"seed", f.seed}}}}},
      {"analyze", {{"threshold", d.analyze_threshold}, {"parallelism", d.analyze_parallelism}}},
  };
}

namespace detail {

// Keys whose values are free-form maps rather than fixed sections.
inline bool is_free_map(const std::string& path) { return path == "generation.target_overrides"; }

inline void merge_into(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown config key '" + path + "'");
    if (it->is_object() && !is_free_map(path)) {
      merge_into(*it, value, path);
    } else {
      *it = value;
    }
  }
}

inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed --set key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("--set key '" + key + "' descends into a non-object");
    start = dot + 1;
  }
}

inline void scrub_credentials(json& doc) {
  if (!doc.is_object()) return;
  for (auto it = doc.begin(); it != doc.end();) {
    const auto k = text::to_lower(it.key());
    if (k.find("api_key") != std::string::npos || k.find("token") != std::string::npos ||
        k.find("secret") != std::string::npos || k.find("password") != std::string::npos) {
      it = doc.erase(it);
    } else {
      scrub_credentials(*it);
      ++it;
    }
  }
}

}  // namespace detail

inline PipelineConfig parse_config(const json& user, const fs::path& base_dir) {
  json doc = default_config_json();
  detail::merge_into(doc, user, "");

  PipelineConfig cfg;
  try {
    auto path = [&](const std::string& key) -> fs::path {
      const auto p = fs::path(doc.at(key).get<std::string>());
      return p.is_absolute() || p.empty() ? p : base_dir / p;
    };
    cfg.registry_path = path("registry_path");
    cfg.seed_pool_path = path("seed_pool_path");
    cfg.human_data_path = path("human_data_path");
    cfg.output_dir = path("output_dir");

    const auto& b = doc.at("backend");
    cfg.backend.kind = b.at("kind").get<std::string>();
    cfg.backend.url = b.at("url").get<std::string>();
    cfg.backend.model_name = b.at("model_name").get<std::string>();
    cfg.backend.parallelism = b.at("parallelism").get<std::size_t>();
    cfg.backend.timeout = std::chrono::seconds(b.at("timeout_s").get<long long>());
    const auto& r = b.at("retry");
    cfg.backend.retry.max_attempts = r.at("max_attempts").get<std::size_t>();
    cfg.backend.retry.base_delay = std::chrono::milliseconds(r.at("base_delay_ms").get<long long>());
    cfg.backend.retry.max_delay = std::chrono::milliseconds(r.at("max_delay_ms").get<long long>());
    cfg.backend.retry.jitter = r.at("jitter").get<double>();
    const auto& m = b.at("mock");
    cfg.backend.mock.seed = m.at("seed").get<std::uint64_t>();
    cfg.backend.mock.duplicate_rate = m.at("duplicate_rate").get<double>();
    cfg.backend.mock.short_rate = m.at("short_rate").get<double>();
    cfg.backend.mock.copy_rate = m.at("copy_rate").get<double>();
    cfg.backend.mock.lines_per_completion = m.at("lines_per_completion").get<std::size_t>();
    cfg.backend.mock.abstain_rate = m.at("abstain_rate").get<double>();
    cfg.backend.mock.model_name = m.at("model_name").get<std::string>();

    const auto& g = doc.at("generation");
    auto& d = cfg.generation.distill;
    d.template_id = g.at("template_id").get<int>();
    d.shots = g.at("shots").get<std::size_t>();
    d.top_p = g.at("top_p").get<double>();
    d.temperature = g.at("temperature").get<double>();
    d.max_tokens = g.at("max_tokens").get<std::size_t>();
    d.samples_per_prompt = g.at("samples_per_prompt").get<std::size_t>();
    d.expected_yield = g.at("expected_yield").get<double>();
    d.round_budget = g.at("round_budget").get<std::size_t>();
    d.seed = g.at("seed").get<std::uint64_t>();
    d.parallelism = cfg.backend.parallelism;
    cfg.generation.target_per_category = g.at("target_per_category").get<std::size_t>();
    cfg.generation.target_overrides = g.at("target_overrides").get<std::map<std::string, std::size_t>>();

    const auto& ds = doc.at("dataset");
    cfg.dataset.na_per_content = ds.at("na_per_content").get<std::size_t>();
    const auto ratio = ds.at("split_ratio").get<std::vector<std::size_t>>();
    if (ratio.size() != 2) throw ConfigError("dataset.split_ratio must have two entries");
    cfg.dataset.ratio = {ratio[0], ratio[1]};
    cfg.dataset.holdout = ds.at("holdout").get<std::vector<std::string>>();
    cfg.dataset.build_seed = ds.at("build_seed").get<std::uint64_t>();
    cfg.dataset.n_per_category = ds.at("n_per_category").get<std::size_t>();
    cfg.dataset.include_seed_pool = ds.at("include_seed_pool").get<bool>();

    const auto& c = doc.at("classifier");
    cfg.classifier.feature_dim = c.at("feature_dim").get<std::size_t>();
    cfg.classifier.hash_seed = c.at("hash_seed").get<std::uint64_t>();
    cfg.classifier.learning_rates = c.at("learning_rates").get<std::vector<double>>();
    cfg.classifier.batch_sizes = c.at("batch_sizes").get<std::vector<std::size_t>>();
    cfg.classifier.max_epochs = c.at("max_epochs").get<std::size_t>();
    cfg.classifier.patience = c.at("patience").get<std::size_t>();
    cfg.classifier.seeds = c.at("seeds").get<std::vector<std::uint64_t>>();

    const auto& e = doc.at("eval");
    cfg.eval.source = e.at("source").get<std::string>();
    const auto preds = fs::path(e.at("preds_path").get<std::string>());
    cfg.eval.preds_path = preds.empty() || preds.is_absolute() ? preds : base_dir / preds;
    const auto& f = e.at("fewshot");
    cfg.eval.fewshot.shots_per_label = f.at("shots_per_label").get<std::size_t>();
    cfg.eval.fewshot.repeats = f.at("repeats").get<std::size_t>();
    cfg.eval.fewshot.top_p = f.at("top_p").get<double>();
    cfg.eval.fewshot.temperature = f.at("temperature").get<double>();
    cfg.eval.fewshot.max_tokens = f.at("max_tokens").get<std::size_t>();
    cfg.eval.fewshot.seed = f.at("seed").get<std::uint64_t>();
    cfg.eval.fewshot.parallelism = cfg.backend.parallelism;

    cfg.analyze_threshold = doc.at("analyze").at("threshold").get<double>();
    cfg.analyze_parallelism = doc.at("analyze").at("parallelism").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }

  if (cfg.backend.kind != "mock" && cfg.backend.kind != "http") {
    throw ConfigError("backend.kind must be 'mock' or 'http'");
  }
  if (cfg.backend.kind == "http" && cfg.backend.url.empty()) throw ConfigError("backend.url is required for http");
  if (cfg.backend.parallelism < 1) throw ConfigError("backend.parallelism must be >= 1");
  if (cfg.generation.distill.template_id < 1 || cfg.generation.distill.template_id > 5) {
    throw ConfigError("generation.template_id must be in 1..5");
  }
  if (cfg.classifier.learning_rates.empty() || cfg.classifier.batch_sizes.empty() || cfg.classifier.seeds.empty()) {
    throw ConfigError("classifier grids and seed list must be non-empty");
  }
  if (!is_power_of_two(cfg.classifier.feature_dim)) throw ConfigError("classifier.feature_dim must be a power of two");
  static const std::vector<std::string> sources = {"classifier", "random", "fewshot", "external"};
  if (std::find(sources.begin(), sources.end(), cfg.eval.source) == sources.end()) {
    throw ConfigError("eval.source must be one of classifier, random, fewshot, external");
  }
  if (!(cfg.analyze_threshold >= 0.0 && cfg.analyze_threshold <= 1.0)) {
    throw ConfigError("analyze.threshold must be in [0, 1]");
  }

  detail::scrub_credentials(doc);
  cfg.echo = std::move(doc);
  return cfg;
}

inline PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  json user;
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  try {
    user = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) detail::apply_override(user, o);
  return parse_config(user, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

}  // namespace valign

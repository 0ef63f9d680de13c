#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "valign/config.hpp"
#include "valign/metrics.hpp"

namespace valign {

using LogFn = std::function<void(const std::string&)>;

struct OutputPaths {
  fs::path root;

  fs::path generated() const { return root / "generated.jsonl"; }
  fs::path generation_report() const { return root / "generation_report.json"; }
  fs::path train() const { return root / "train.jsonl"; }
  fs::path val() const { return root / "val.jsonl"; }
  fs::path test() const { return root / "test.jsonl"; }
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path model(std::uint64_t seed) const { return root / "models" / ("model_seed" + std::to_string(seed) + ".bin"); }
  fs::path train_report() const { return root / "train_report.json"; }
  fs::path eval_dir(const std::string& source) const { return root / "eval" / source; }
  fs::path overlap() const { return root / "overlap.json"; }
};

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw InputError(what + " not found: " + p.string());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

inline std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg, const Registry& registry) {
  if (cfg.backend.kind == "mock") return std::make_unique<mock::MockBackend>(registry, cfg.backend.mock);
  HttpConfig h;
  h.url = cfg.backend.url;
  h.model_name = cfg.backend.model_name;
  h.timeout = cfg.backend.timeout;
  h.retry = cfg.backend.retry;
  return std::make_unique<HttpBackend>(std::move(h));
}

// ---- generate ---------------------------------------------------------------

struct GenerateResult {
  std::vector<GeneratedSample> samples;
  std::vector<DistillReport> reports;
  std::vector<std::string> warnings;
};

inline std::size_t category_target(const GenerationSettings& g, const std::string& id) {
  const auto it = g.target_overrides.find(id);
  return it == g.target_overrides.end() ? g.target_per_category : std::min(g.target_per_category, it->second);
}

inline ordered_json generation_report_json(const PipelineConfig& cfg, const GenerateResult& r,
                                           const std::string& error) {
  ordered_json reports = ordered_json::array();
  FilterStats total;
  std::size_t prompts = 0;
  for (const auto& d : r.reports) {
    reports.push_back(to_json(d));
    total.input += d.filter.input;
    total.duplicates += d.filter.duplicates;
    total.seed_copies += d.filter.seed_copies;
    total.too_short += d.filter.too_short;
    total.kept += d.filter.kept;
    prompts += d.prompts_issued;
  }
  return {{"config", cfg.echo},
          {"complete", error.empty()},
          {"error", error},
          {"samples", r.samples.size()},
          {"prompts_issued", prompts},
          {"filter_totals", to_json(total)},
          {"warnings", r.warnings},
          {"categories", reports}};
}

// Value and counter-value samples per non-held-out category. Deduplication is
// per category across both stances. On a backend error the samples obtained
// so far are written before the error propagates.
inline GenerateResult cmd_generate(const PipelineConfig& cfg, const LogFn& log = {}) {
  require_file(cfg.registry_path, "registry");
  require_file(cfg.seed_pool_path, "seed pool");
  const auto registry = load_registry(cfg.registry_path);
  const auto pool = load_seed_pool(cfg.seed_pool_path, registry);
  for (const auto& id : cfg.dataset.holdout) {
    if (!registry.contains(id)) throw ConfigError("unknown holdout category '" + id + "'");
  }
  auto backend = make_backend(cfg, registry);
  const std::unordered_set<std::string> held(cfg.dataset.holdout.begin(), cfg.dataset.holdout.end());
  const OutputPaths out{cfg.output_dir};

  GenerateResult result;
  std::string error;
  auto flush = [&] {
    write_file(out.generated(), to_jsonl(result.samples, [](const GeneratedSample& s) { return to_json(s); }));
    write_file(out.generation_report(), dump(generation_report_json(cfg, result, error)));
  };

  try {
    for (const auto& cat : registry.categories()) {
      if (held.count(cat.id)) continue;
      const std::size_t target = category_target(cfg.generation, cat.id);
      const std::size_t value_target = (target + 1) / 2;
      std::unordered_set<std::string> prior;
      for (auto stance : {Stance::value, Stance::counter_value}) {
        const std::size_t t = stance == Stance::value ? value_target : target - value_target;
        auto o = distill_category(registry, pool, *backend, cat.id, stance, t, cfg.generation.distill, prior);
        for (const auto& s : o.samples) prior.insert(text::normalize(s.content));
        if (!o.report.warning.empty()) {
          result.warnings.push_back(o.report.warning);
          if (log) log("warning: " + o.report.warning);
        }
        if (log) {
          log(cat.id + " " + std::string(to_string(stance)) + ": " + std::to_string(o.samples.size()) + "/" +
              std::to_string(t) + " in " + std::to_string(o.report.rounds) + " round(s)");
        }
        result.samples.insert(result.samples.end(), o.samples.begin(), o.samples.end());
        result.reports.push_back(std::move(o.report));
      }
    }
  } catch (const BackendError& e) {
    error = e.what();
    flush();
    throw;
  }
  flush();
  return result;
}

// ---- build ------------------------------------------------------------------

// Checks the structural guarantees of a bundle; throws InvariantError.
inline void verify_bundle(const DatasetBundle& b) {
  std::unordered_set<std::string> train_contents;
  for (const auto* split : {&b.train, &b.val, &b.test}) {
    for (const auto& t : *split) check_triplet(t);
  }
  for (const auto& t : b.train) train_contents.insert(t.content);
  for (const auto& t : b.val) {
    if (train_contents.count(t.content)) throw InvariantError("content shared by train and val: " + t.content);
  }
  if (!b.holdout_categories.empty()) {
    const std::unordered_set<std::string> ids(b.holdout_categories.begin(), b.holdout_categories.end());
    for (const auto* split : {&b.train, &b.val}) {
      for (const auto& t : *split) {
        if (touches(t, ids)) throw InvariantError("held-out category " + t.content_category_id + " leaked into training");
      }
    }
    for (const auto& t : b.test) {
      if (!ids.count(t.content_category_id)) throw InvariantError("test contains seen category " + t.content_category_id);
    }
  }
}

struct BuildResult {
  DatasetBundle bundle;
  BuildStats stats;
};

inline BuildResult cmd_build(const PipelineConfig& cfg, const LogFn& log = {}) {
  const OutputPaths out{cfg.output_dir};
  require_file(cfg.registry_path, "registry");
  require_file(cfg.seed_pool_path, "seed pool");
  require_file(cfg.human_data_path, "human data");
  require_file(out.generated(), "generated samples (run generate first)");
  const auto registry = load_registry(cfg.registry_path);
  const auto pool = load_seed_pool(cfg.seed_pool_path, registry);
  const auto human = load_human_data(cfg.human_data_path, registry);
  const auto generated = load_generated(out.generated());

  BuildResult r;
  r.bundle = build_bundle(generated, pool, human, registry, cfg.dataset, &r.stats);
  verify_bundle(r.bundle);

  const auto train = triplets_to_jsonl(r.bundle.train);
  const auto val = triplets_to_jsonl(r.bundle.val);
  const auto test = triplets_to_jsonl(r.bundle.test);
  write_file(out.train(), train);
  write_file(out.val(), val);
  write_file(out.test(), test);
  const ordered_json manifest = {
      {"config", cfg.echo},
      {"build_seed", r.bundle.build_seed},
      {"holdout_categories", r.bundle.holdout_categories},
      {"sources",
       {{"generated_used", r.stats.generated_used},
        {"seed_pool_used", r.stats.seed_pool_used},
        {"human_excluded_as_seed", r.stats.human_excluded_as_seed}}},
      {"splits",
       {{"train", {{"file", "train.jsonl"}, {"fnv1a64", hex64(fnv1a64(train))}, {"counts", split_counts(r.bundle.train)}}},
        {"val", {{"file", "val.jsonl"}, {"fnv1a64", hex64(fnv1a64(val))}, {"counts", split_counts(r.bundle.val)}}},
        {"test", {{"file", "test.jsonl"}, {"fnv1a64", hex64(fnv1a64(test))}, {"counts", split_counts(r.bundle.test)}}}}}};
  write_file(out.manifest(), dump(manifest));
  if (log) {
    log("train " + std::to_string(r.bundle.train.size()) + ", val " + std::to_string(r.bundle.val.size()) +
        ", test " + std::to_string(r.bundle.test.size()) + " triplets");
  }
  return r;
}

// ---- train ------------------------------------------------------------------

struct Candidate {
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::optional<TrainHistory> history;
  std::string error;
};

struct SeedTraining {
  std::uint64_t seed = 0;
  std::vector<Candidate> candidates;
  std::optional<std::size_t> winner;  // index into candidates
  std::optional<MetricsReport> val_metrics;
  std::string error;
};

struct TrainResult {
  std::vector<SeedTraining> seeds;
  bool all_ok() const {
    for (const auto& s : seeds) {
      if (!s.winner) return false;
    }
    return true;
  }
};

inline ordered_json to_json(const Candidate& c) {
  ordered_json j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}};
  if (c.history) {
    j["best_epoch"] = c.history->best_epoch;
    j["epochs_run"] = c.history->train_loss.size();
    j["early_stopped"] = c.history->early_stopped;
    j["best_val_weighted_f1"] = c.history->best_val_weighted_f1;
    j["train_loss"] = c.history->train_loss;
    j["val_weighted_f1"] = c.history->val_weighted_f1;
  } else {
    j["error"] = c.error;
  }
  return j;
}

// For each seed, trains every grid point and keeps the one with the best
// validation weighted F1 (first grid point wins ties). A failing seed is
// recorded and the remaining seeds still run.
inline TrainResult cmd_train(const PipelineConfig& cfg, const LogFn& log = {}) {
  const OutputPaths out{cfg.output_dir};
  require_file(out.train(), "train split (run build first)");
  require_file(out.val(), "val split (run build first)");
  const auto train = load_triplets(out.train());
  const auto val = load_triplets(out.val());
  const auto& c = cfg.classifier;

  TrainResult result;
  for (const auto seed : c.seeds) {
    SeedTraining st;
    st.seed = seed;
    std::optional<ClassifierModel> best;
    for (const double lr : c.learning_rates) {
      for (const auto bs : c.batch_sizes) {
        Candidate cand{lr, bs, std::nullopt, {}};
        TrainConfig tc{c.feature_dim, c.hash_seed, lr, bs, c.max_epochs, c.patience, seed};
        try {
          auto o = train_classifier(train, val, tc);
          cand.history = o.history;
          const bool better = !st.winner || o.history.best_val_weighted_f1 >
                                                st.candidates[*st.winner].history->best_val_weighted_f1;
          if (better) {
            st.winner = st.candidates.size();
            best = std::move(o.model);
          }
        } catch (const InvariantError& e) {
          cand.error = e.what();
        }
        st.candidates.push_back(std::move(cand));
      }
    }
    if (best) {
      save_model(*best, out.model(seed));
      const auto preds = predict_all(*best, val);
      const auto golds = gold_labels(val);
      const auto labels = labels_of(preds);
      st.val_metrics = compute_metrics(std::span<const Label>(golds), std::span<const Label>(labels));
      if (log) {
        const auto& w = st.candidates[*st.winner];
        log("seed " + std::to_string(seed) + ": lr=" + std::to_string(w.learning_rate) + " batch=" +
            std::to_string(w.batch_size) + " val W-F1=" + std::to_string(st.val_metrics->weighted_f1));
      }
    } else {
      st.error = "no grid point trained successfully for seed " + std::to_string(seed);
      if (log) log("error: " + st.error);
    }
    result.seeds.push_back(std::move(st));
  }

  ordered_json seeds = ordered_json::array();
  std::vector<MetricsReport> val_reports;
  for (const auto& s : result.seeds) {
    ordered_json cands = ordered_json::array();
    for (const auto& cand : s.candidates) cands.push_back(to_json(cand));
    ordered_json j = {{"seed", s.seed}, {"candidates", cands}};
    if (s.winner) {
      j["selected"] = {{"learning_rate", s.candidates[*s.winner].learning_rate},
                       {"batch_size", s.candidates[*s.winner].batch_size}};
      j["model_file"] = fs::relative(out.model(s.seed), out.root).generic_string();
      j["val_metrics"] = to_json(*s.val_metrics);
      val_reports.push_back(*s.val_metrics);
    } else {
      j["error"] = s.error;
    }
    seeds.push_back(std::move(j));
  }
  ordered_json report = {{"config", cfg.echo}, {"train_size", train.size()}, {"val_size", val.size()}, {"seeds", seeds}};
  if (!val_reports.empty()) report["val_aggregate"] = to_json(aggregate_seeds(val_reports));
  write_file(out.train_report(), dump(report));
  return result;
}

// ---- eval -------------------------------------------------------------------

struct EvalRun {
  std::string name;  // e.g. seed0, repeat2, external
  std::vector<PredictionRow> rows;
  MetricsReport metrics;
  std::map<std::string, MetricsReport> per_category;
};

struct EvalResult {
  std::string source;
  std::vector<EvalRun> runs;
  AggregateReport aggregate;
  std::vector<std::size_t> all_abstained;
};

inline std::string percent(const MetricSummary& m) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << 100.0 * m.mean << " ± " << 100.0 * m.std;
  return ss.str();
}

inline std::string render_report(const EvalResult& r, const std::vector<Triplet>& test) {
  std::ostringstream md;
  md << "# Evaluation: " << r.source << "\n\n";
  md << "Test triplets: " << test.size() << ", runs: " << r.runs.size()
     << ". Values are mean ± population std over runs, in percent.\n\n";
  md << "| Metric | Value |\n|---|---|\n";
  for (const auto* k : {"accuracy", "weighted_f1", "weighted_precision", "weighted_recall", "macro_f1"}) {
    md << "| " << k << " | " << percent(r.aggregate.metrics.at(k)) << " |\n";
  }
  md << "\n## Per class\n\n| Label | Precision | Recall | F1 |\n|---|---|---|---|\n";
  for (auto l : kLabelOrder) {
    const std::string n(to_string(l));
    md << "| " << n << " | " << percent(r.aggregate.metrics.at(n + ".precision")) << " | "
       << percent(r.aggregate.metrics.at(n + ".recall")) << " | " << percent(r.aggregate.metrics.at(n + ".f1"))
       << " |\n";
  }
  std::map<std::string, std::vector<MetricsReport>> by_cat;
  for (const auto& run : r.runs) {
    for (const auto& [id, m] : run.per_category) by_cat[id].push_back(m);
  }
  md << "\n## Per content category\n\n| Category | Accuracy | Weighted F1 |\n|---|---|---|\n";
  for (const auto& [id, reports] : by_cat) {
    const auto agg = aggregate_seeds(reports);
    md << "| " << id << " | " << percent(agg.metrics.at("accuracy")) << " | " << percent(agg.metrics.at("weighted_f1"))
       << " |\n";
  }
  if (!r.all_abstained.empty()) {
    md << "\n" << r.all_abstained.size() << " test item(s) received no parseable label in any run.\n";
  }
  return md.str();
}

inline EvalRun score_run(std::string name, std::vector<PredictionRow> rows, const std::vector<Triplet>& test) {
  EvalRun run;
  run.name = std::move(name);
  std::vector<std::optional<Label>> labels;
  labels.reserve(rows.size());
  for (const auto& row : rows) labels.push_back(row.label);
  const auto golds = gold_labels(test);
  run.metrics = compute_metrics(std::span<const Label>(golds), std::span<const std::optional<Label>>(labels));
  run.per_category = per_category_metrics(test, std::span<const std::optional<Label>>(labels));
  run.rows = std::move(rows);
  return run;
}

inline EvalResult cmd_eval(const PipelineConfig& cfg, const LogFn& log = {}) {
  const OutputPaths out{cfg.output_dir};
  require_file(out.test(), "test split (run build first)");
  const auto test = load_triplets(out.test());
  if (test.empty()) throw InputError("test split is empty");

  EvalResult r;
  r.source = cfg.eval.source;
  const auto& src = r.source;
  if (src == "classifier") {
    for (const auto seed : cfg.classifier.seeds) {
      require_file(out.model(seed), "model for seed " + std::to_string(seed) + " (run train first)");
      const auto model = load_model(out.model(seed));
      r.runs.push_back(score_run("seed" + std::to_string(seed), rows_from(predict_all(model, test)), test));
    }
  } else if (src == "random") {
    require_file(out.train(), "train split");
    const auto dist = label_distribution(load_triplets(out.train()));
    for (const auto seed : cfg.classifier.seeds) {
      r.runs.push_back(score_run("seed" + std::to_string(seed), rows_from(random_baseline(dist, test, seed)), test));
    }
  } else if (src == "fewshot") {
    require_file(out.train(), "train split");
    require_file(cfg.registry_path, "registry");
    const auto registry = load_registry(cfg.registry_path);
    const auto exemplars = load_triplets(out.train());
    auto backend = make_backend(cfg, registry);
    auto fo = fewshot_classify(*backend, exemplars, test, cfg.eval.fewshot);
    for (std::size_t rep = 0; rep < fo.predictions.size(); ++rep) {
      std::vector<PredictionRow> rows;
      for (std::size_t i = 0; i < test.size(); ++i) {
        PredictionRow row{i, fo.predictions[rep][i], {}};
        if (row.label) row.probabilities[index_of(*row.label)] = 1.0;
        rows.push_back(row);
      }
      r.runs.push_back(score_run("repeat" + std::to_string(rep), std::move(rows), test));
    }
    r.all_abstained = fo.all_abstained;
  } else {
    if (cfg.eval.preds_path.empty()) throw ConfigError("eval.preds_path is required for source 'external'");
    require_file(cfg.eval.preds_path, "predictions file");
    r.runs.push_back(score_run("external", load_predictions(cfg.eval.preds_path, test.size()), test));
  }

  std::vector<MetricsReport> reports;
  for (const auto& run : r.runs) reports.push_back(run.metrics);
  r.aggregate = aggregate_seeds(reports);

  const auto dir = out.eval_dir(src);
  ordered_json runs = ordered_json::array();
  for (const auto& run : r.runs) {
    const std::string file = "preds_" + run.name + ".jsonl";
    write_file(dir / file, predictions_to_jsonl(run.rows));
    ordered_json per_cat = ordered_json::object();
    for (const auto& [id, m] : run.per_category) per_cat[id] = to_json(m);
    runs.push_back({{"run", run.name}, {"predictions", file}, {"metrics", to_json(run.metrics)}, {"per_category", per_cat}});
  }
  const ordered_json metrics = {{"config", cfg.echo},
                                {"source", src},
                                {"test_size", test.size()},
                                {"aggregate", to_json(r.aggregate)},
                                {"all_abstained", r.all_abstained},
                                {"runs", runs}};
  write_file(dir / "metrics.json", dump(metrics));
  write_file(dir / "report.md", render_report(r, test));
  if (log) {
    log(src + ": accuracy " + percent(r.aggregate.metrics.at("accuracy")) + ", weighted F1 " +
        percent(r.aggregate.metrics.at("weighted_f1")));
  }
  return r;
}

// ---- analyze ----------------------------------------------------------------

inline OverlapReport cmd_analyze(const PipelineConfig& cfg, const LogFn& log = {}) {
  const OutputPaths out{cfg.output_dir};
  require_file(out.generated(), "generated samples");
  require_file(out.test(), "test split");
  const auto r = analyze_overlap(load_generated(out.generated()), load_triplets(out.test()), cfg.analyze_threshold,
                                 cfg.analyze_parallelism);
  ordered_json j = to_json(r);
  j["config"] = cfg.echo;
  write_file(out.overlap(), dump(j));
  if (log) {
    log("jaccard " + std::to_string(r.dataset_jaccard) + ", near-duplicate rate " +
        std::to_string(r.near_duplicate_rate));
  }
  return r;
}

}  // namespace valign

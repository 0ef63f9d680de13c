#include <catch_amalgamated.hpp>

#include "support/fixtures.hpp"
#include "valign/pipeline.hpp"

using namespace valign;
using fixtures::TempDir;

namespace {

json small_config(const fs::path& out) {
  const auto src = fixtures::source_dir();
  return {{"registry_path", (src / "values/sexism.json").string()},
          {"seed_pool_path", (src / "data/mock_seed_pool.jsonl").string()},
          {"human_data_path", (src / "data/mock_human.jsonl").string()},
          {"output_dir", out.string()},
          {"backend", {{"mock", {{"seed", 5}, {"duplicate_rate", 0.1}, {"copy_rate", 0.05}, {"short_rate", 0.05}}}}},
          {"generation", {{"target_per_category", 12}, {"seed", 1}}},
          {"dataset", {{"build_seed", 2}}},
          {"classifier",
           {{"feature_dim", 1 << 14}, {"learning_rates", {0.05}}, {"batch_sizes", {32}}, {"max_epochs", 4},
            {"seeds", {0, 1}}}},
          {"eval", {{"fewshot", {{"repeats", 2}}}}}};
}

PipelineConfig with(json doc, const std::string& key, json value) {
  detail::apply_override(doc, key + "=" + value.dump());
  return parse_config(doc, ".");
}

void run_all(const PipelineConfig& cfg) {
  cmd_generate(cfg);
  cmd_build(cfg);
  REQUIRE(cmd_train(cfg).all_ok());
  for (const auto* src : {"classifier", "random", "fewshot"}) {
    auto c = cfg;
    c.eval.source = src;
    cmd_eval(c);
  }
  cmd_analyze(cfg);
}

std::vector<fs::path> tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TEST_CASE("mock pipeline produces every artifact") {
  TempDir tmp("pipeline");
  const auto cfg = parse_config(small_config(tmp.path()), ".");
  const OutputPaths out{tmp.path()};

  const auto gen = cmd_generate(cfg);
  CHECK(gen.samples.size() == 19 * 12);
  CHECK(gen.warnings.empty());
  const auto report = json::parse(read_file(out.generation_report()));
  CHECK(report.at("complete") == true);
  CHECK(report.at("samples") == 19 * 12);
  CHECK(report.at("config").at("generation").at("target_per_category") == 12);
  const auto& ft = report.at("filter_totals");
  CHECK(ft.at("input").get<std::size_t>() ==
        ft.at("duplicates").get<std::size_t>() + ft.at("seed_copies").get<std::size_t>() +
            ft.at("too_short").get<std::size_t>() + ft.at("kept").get<std::size_t>());

  const auto built = cmd_build(cfg);
  const auto manifest = json::parse(read_file(out.manifest()));
  CHECK(manifest.at("splits").at("train").at("fnv1a64") == hex64(fnv1a64(read_file(out.train()))));
  CHECK(load_triplets(out.train()) == built.bundle.train);
  CHECK(load_triplets(out.test()) == built.bundle.test);

  const auto trained = cmd_train(cfg);
  REQUIRE(trained.all_ok());
  CHECK(fs::exists(out.model(0)));
  CHECK(fs::exists(out.model(1)));
  const auto tr = json::parse(read_file(out.train_report()));
  CHECK(tr.at("seeds").size() == 2);
  CHECK(tr.at("seeds")[0].at("selected").at("learning_rate") == 0.05);

  const auto ev = cmd_eval(cfg);
  CHECK(ev.runs.size() == 2);
  CHECK(fs::exists(out.eval_dir("classifier") / "preds_seed0.jsonl"));
  CHECK(fs::exists(out.eval_dir("classifier") / "report.md"));
  const auto metrics = json::parse(read_file(out.eval_dir("classifier") / "metrics.json"));
  CHECK(metrics.at("test_size") == built.bundle.test.size());
  CHECK(metrics.at("runs").size() == 2);

  SECTION("external predictions score identically to the classifier run") {
    auto c = cfg;
    c.eval.source = "external";
    c.eval.preds_path = out.eval_dir("classifier") / "preds_seed0.jsonl";
    const auto ext = cmd_eval(c);
    REQUIRE(ext.runs.size() == 1);
    CHECK(ext.runs[0].metrics.weighted_f1 == ev.runs[0].metrics.weighted_f1);
    CHECK(ext.runs[0].metrics.accuracy == ev.runs[0].metrics.accuracy);
  }

  SECTION("external predictions of the wrong length are rejected") {
    const auto rows = load_predictions(out.eval_dir("classifier") / "preds_seed0.jsonl", built.bundle.test.size());
    const std::vector<PredictionRow> short_rows(rows.begin(), rows.end() - 1);
    write_file(tmp / "short.jsonl", predictions_to_jsonl(short_rows));
    auto c = cfg;
    c.eval.source = "external";
    c.eval.preds_path = tmp / "short.jsonl";
    CHECK_THROWS_AS(cmd_eval(c), InputError);
  }

  SECTION("random and few-shot sources") {
    auto c = cfg;
    c.eval.source = "random";
    const auto rnd = cmd_eval(c);
    CHECK(rnd.runs.size() == 2);
    CHECK(rnd.aggregate.metrics.at("accuracy").mean == Catch::Approx(1.0 / 3).margin(0.05));
    c.eval.source = "fewshot";
    const auto fs_ = cmd_eval(c);
    CHECK(fs_.runs.size() == 2);
    CHECK(fs::exists(out.eval_dir("fewshot") / "preds_repeat1.jsonl"));
  }

  SECTION("overlap analysis") {
    const auto ov = cmd_analyze(cfg);
    CHECK(ov.dataset_jaccard >= 0.0);
    CHECK(ov.dataset_jaccard <= 1.0);
    const auto j = json::parse(read_file(out.overlap()));
    CHECK(j.contains("config"));
  }
}

TEST_CASE("pipeline output is byte-identical across runs") {
  TempDir tmp("determinism");
  const auto cfg = parse_config(small_config(tmp / "run"), ".");
  run_all(cfg);
  fs::rename(tmp / "run", tmp / "first");
  run_all(cfg);
  const auto a = tree(tmp / "first");
  REQUIRE(a == tree(tmp / "run"));
  CHECK(a.size() > 10);
  for (const auto& rel : a) {
    CAPTURE(rel.string());
    CHECK(read_file(tmp / "first" / rel) == read_file(tmp / "run" / rel));
  }
}

TEST_CASE("holdout runs exclude the held-out categories from training") {
  TempDir tmp("holdout");
  const std::vector<std::string> held = {"pay_gap", "body_shaming", "tone_policing"};
  auto doc = small_config(tmp.path());
  for (const auto& id : held) REQUIRE(fixtures::sexism_registry().contains(id));
  const auto cfg = with(doc, "dataset.holdout", held);
  const auto gen = cmd_generate(cfg);
  CHECK(gen.samples.size() == 16 * 12);
  for (const auto& s : gen.samples) CHECK(std::find(held.begin(), held.end(), s.category_id) == held.end());
  const auto built = cmd_build(cfg);
  const std::unordered_set<std::string> ids(held.begin(), held.end());
  for (const auto* split : {&built.bundle.train, &built.bundle.val}) {
    for (const auto& t : *split) CHECK_FALSE(touches(t, ids));
  }
  REQUIRE_FALSE(built.bundle.test.empty());
  for (const auto& t : built.bundle.test) CHECK(ids.count(t.content_category_id) == 1);
}

TEST_CASE("missing inputs are input errors") {
  TempDir tmp("missing");
  auto doc = small_config(tmp.path());
  CHECK_THROWS_AS(cmd_build(parse_config(doc, ".")), InputError);
  CHECK_THROWS_AS(cmd_train(parse_config(doc, ".")), InputError);
  CHECK_THROWS_AS(cmd_eval(parse_config(doc, ".")), InputError);
  CHECK_THROWS_AS(cmd_generate(with(doc, "registry_path", (tmp / "nope.json").string())), InputError);
  CHECK_THROWS_AS(cmd_generate(with(doc, "dataset.holdout", json::array({"no_such_category"}))), ConfigError);
}

TEST_CASE("an unreachable teacher fails with a backend error and keeps partial output") {
  TempDir tmp("unreachable");
  const int port = fixtures::unused_port();
  auto doc = small_config(tmp.path());
  detail::apply_override(doc, "backend.kind=http");
  detail::apply_override(doc, "backend.url=http://127.0.0.1:" + std::to_string(port) + "/v1/completions");
  detail::apply_override(doc, "backend.retry.max_attempts=1");
  CHECK_THROWS_AS(cmd_generate(parse_config(doc, ".")), BackendError);
  const auto report = json::parse(read_file(tmp / "generation_report.json"));
  CHECK(report.at("complete") == false);
  CHECK_FALSE(report.at("error").get<std::string>().empty());
  CHECK(fs::exists(tmp / "generated.jsonl"));
}

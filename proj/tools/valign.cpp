#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "valign/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kInput = 3, kBackend = 4, kInvariant = 5 };

void log_line(const std::string& s) { std::cerr << s << "\n"; }

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const valign::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const valign::BackendError& e) {
    std::cerr << "backend error (" << valign::to_string(e.kind()) << "): " << e.what() << "\n";
    return kBackend;
  } catch (const valign::InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kInvariant;
  } catch (const valign::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value-aligned sexism dataset generation and judge training"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "pipeline config (JSON)")->required();
    sub->add_option("--set", overrides, "override a config key, e.g. --set generation.seed=7");
  };

  auto* generate = app.add_subcommand("generate", "distill value-aligned contents from the backend");
  auto* build = app.add_subcommand("build", "build train/val/test triplet splits");
  auto* train = app.add_subcommand("train", "train the judge classifier for every configured seed");
  auto* eval = app.add_subcommand("eval", "score predictions on the test split");
  auto* analyze = app.add_subcommand("analyze", "vocabulary overlap between generated and test contents");
  auto* all = app.add_subcommand("all", "generate, build, train, eval and analyze in sequence");
  for (auto* s : {generate, build, train, eval, analyze, all}) add_common(s);
  std::string eval_source;
  std::string eval_preds;
  eval->add_option("--source", eval_source, "classifier, random, fewshot or external (overrides eval.source)");
  eval->add_option("--preds", eval_preds, "predictions file for --source external");

  std::string mock_dir;
  std::size_t human_n = 1000;
  std::size_t per_pool = 10;
  std::string registry_path = "values/sexism.json";
  auto* mock_data = app.add_subcommand("mock-data", "write a synthetic seed pool and human corpus");
  mock_data->add_option("--registry", registry_path, "value registry")->capture_default_str();
  mock_data->add_option("--out", mock_dir, "output directory")->required();
  mock_data->add_option("--human", human_n, "number of human contents")->capture_default_str();
  mock_data->add_option("--per-pool", per_pool, "seed examples per (category, stance)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  return run_guarded([&] {
    if (mock_data->parsed()) {
      const auto registry = valign::load_registry(registry_path);
      const auto pool = valign::mock::make_seed_pool(registry, per_pool);
      const auto human = valign::mock::make_human_corpus(registry, human_n);
      const valign::fs::path dir(mock_dir);
      valign::write_file(dir / "mock_seed_pool.jsonl",
                         valign::to_jsonl(pool.all(), [](const valign::SeedExample& s) { return valign::to_json(s); }));
      valign::write_file(dir / "mock_human.jsonl",
                         valign::to_jsonl(human, [](const valign::HumanContent& h) { return valign::to_json(h); }));
      log_line("wrote " + std::to_string(pool.size()) + " seed examples and " + std::to_string(human.size()) +
               " human contents to " + dir.string());
      return;
    }
    if (!eval_source.empty()) overrides.push_back("eval.source=" + eval_source);
    if (!eval_preds.empty()) overrides.push_back("eval.preds_path=" + valign::fs::absolute(eval_preds).string());
    const auto cfg = valign::load_config(config_path, overrides);
    const bool everything = all->parsed();
    if (everything || generate->parsed()) valign::cmd_generate(cfg, log_line);
    if (everything || build->parsed()) valign::cmd_build(cfg, log_line);
    if (everything || train->parsed()) {
      const auto r = valign::cmd_train(cfg, log_line);
      if (!r.all_ok()) throw valign::InvariantError("training failed for at least one seed (see train_report.json)");
    }
    if (everything || eval->parsed()) valign::cmd_eval(cfg, log_line);
    if (everything || analyze->parsed()) valign::cmd_analyze(cfg, log_line);
  });
}

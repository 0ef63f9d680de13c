#include <catch_amalgamated.hpp>

#include <map>
#include <set>

#include "support/fixtures.hpp"
#include "valign/dataset.hpp"
#include "valign/mock.hpp"

using namespace valign;

namespace {

std::vector<GeneratedSample> fake_generated(const Registry& reg, std::size_t per_stance) {
  std::vector<GeneratedSample> out;
  for (const auto& c : reg.categories()) {
    for (auto s : {Stance::value, Stance::counter_value}) {
      for (std::size_t i = 0; i < per_stance; ++i) {
        out.push_back({"generated " + c.id + " " + std::string(to_string(s)) + " number " + std::to_string(i), c.id,
                       s, Provenance{"mock", "m", 1, i, i, 256}});
      }
    }
  }
  return out;
}

std::array<std::size_t, kNumLabels> label_counts(const std::vector<Triplet>& ts) {
  std::array<std::size_t, kNumLabels> n{};
  for (const auto& t : ts) ++n[index_of(t.label)];
  return n;
}

}  // namespace

TEST_CASE("pairing gives one sexist and one non-sexist triplet per content") {
  const auto reg = fixtures::toy_registry(3);
  const auto gen = fake_generated(reg, 2);
  const auto paired = pair_labels(gen, reg);
  REQUIRE(paired.size() == 2 * gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const auto& a = paired[2 * i];
    const auto& b = paired[2 * i + 1];
    CHECK(a.content == gen[i].content);
    CHECK(a.label == Label::sexist);
    CHECK(a.value == reg.at(gen[i].category_id).value);
    CHECK(b.label == Label::non_sexist);
    CHECK(b.value == reg.at(gen[i].category_id).counter_value);
    CHECK_NOTHROW(check_triplet(a));
    CHECK_NOTHROW(check_triplet(b));
  }
}

TEST_CASE("na synthesis never reuses the content's own category") {
  const auto& reg = fixtures::sexism_registry();
  const auto gen = fake_generated(reg, 3);
  for (std::size_t k : {1u, 3u, 36u}) {
    const auto na = synthesize_na(gen, reg, k, 77);
    REQUIRE(na.size() == gen.size() * k);
    for (std::size_t i = 0; i < gen.size(); ++i) {
      std::set<std::string> values;
      for (std::size_t j = 0; j < k; ++j) {
        const auto& t = na[i * k + j];
        REQUIRE(t.label == Label::na);
        REQUIRE(t.category_id != t.content_category_id);
        REQUIRE(t.content_category_id == gen[i].category_id);
        REQUIRE(t.value == reg.at(t.category_id).text(t.stance));
        REQUIRE(t.origin == Origin::synthetic_na);
        values.insert(t.value);
      }
      REQUIRE(values.size() == k);
    }
  }
  CHECK_THROWS_AS(synthesize_na(gen, reg, 37, 1), InputError);
  CHECK(synthesize_na(gen, reg, 1, 77) == synthesize_na(gen, reg, 1, 77));
  CHECK_THROWS_AS(synthesize_na(fake_generated(fixtures::toy_registry(1), 1), fixtures::toy_registry(1), 1, 1),
                  InputError);
}

TEST_CASE("na draws are spread over the other categories") {
  const auto reg = fixtures::toy_registry(4);
  const auto gen = fake_generated(reg, 300);
  std::map<std::string, int> hits;
  for (const auto& t : synthesize_na(gen, reg, 1, 5)) {
    if (t.content_category_id == "cat0") ++hits[t.category_id + "/" + std::string(to_string(t.stance))];
  }
  REQUIRE(hits.size() == 6);
  for (const auto& [k, n] : hits) CHECK(std::abs(n - 100) < 40);
}

TEST_CASE("train/val split is content-disjoint with the requested ratio") {
  const auto reg = fixtures::toy_registry(5);
  const auto gen = fake_generated(reg, 50);
  auto pool = pair_labels(gen, reg);
  const auto na = synthesize_na(gen, reg, 1, 3);
  pool.insert(pool.end(), na.begin(), na.end());
  const auto [train, val] = split_train_val(pool, {4, 1}, 11);
  CHECK(train.size() + val.size() == pool.size());
  std::set<std::string> tc, vc;
  for (const auto& t : train) tc.insert(t.content);
  for (const auto& t : val) vc.insert(t.content);
  for (const auto& c : vc) CHECK_FALSE(tc.count(c));
  CHECK(vc.size() == 100);
  CHECK(tc.size() == 400);
  const auto lt = label_counts(train);
  const auto lv = label_counts(val);
  CHECK(lt[0] == lt[1]);
  CHECK(lt[1] == lt[2]);
  CHECK(lv[0] == lv[1]);
  CHECK(lv[1] == lv[2]);

  CHECK(split_train_val(pool, {4, 1}, 11) == std::pair{train, val});
  CHECK(split_train_val(pool, {4, 1}, 12) != std::pair{train, val});
  CHECK_THROWS_AS(split_train_val(std::vector<Triplet>(pool.begin(), pool.begin() + 2), {4, 1}, 1), InputError);
  CHECK_THROWS_AS(split_train_val(pool, {4, 0}, 1), ConfigError);
}

TEST_CASE("test set conversion is balanced and na values are unrelated") {
  const auto& reg = fixtures::sexism_registry();
  const auto human = mock::make_human_corpus(reg, 300, 0.3, 4);
  const auto test = build_test_set(human, reg, 8);
  std::size_t owned = 0;
  for (const auto& h : human) owned += h.categories.size();
  REQUIRE(test.size() == 3 * owned);
  const auto n = label_counts(test);
  CHECK(n[0] == owned);
  CHECK(n[1] == owned);
  CHECK(n[2] == owned);
  std::map<std::string, std::set<std::string>> cats_of;
  for (const auto& h : human) cats_of[h.content] = {h.categories.begin(), h.categories.end()};
  for (const auto& t : test) {
    CHECK(t.origin == Origin::human);
    CHECK_NOTHROW(check_triplet(t));
    if (t.label == Label::na) CHECK_FALSE(cats_of[t.content].count(t.category_id));
  }
  CHECK_THROWS_AS(build_test_set({{"x y z", reg.ids()}}, reg, 1), InputError);
  CHECK_THROWS_AS(build_test_set({{"x y z", {}}}, reg, 1), InputError);
}

TEST_CASE("per-category cap splits between stances") {
  const auto reg = fixtures::toy_registry(2);
  auto gen = fake_generated(reg, 10);
  auto capped = cap_per_category(gen, 8);
  CHECK(capped.size() == 16);
  capped = cap_per_category(gen, 7);
  std::map<std::pair<std::string, Stance>, int> n;
  for (const auto& s : capped) ++n[{s.category_id, s.stance}];
  CHECK(n[{"cat0", Stance::value}] == 4);
  CHECK(n[{"cat0", Stance::counter_value}] == 3);
  // A short stance leaves its quota to the other.
  std::erase_if(gen, [](const GeneratedSample& s) {
    return s.category_id == "cat1" && s.stance == Stance::value && s.provenance.prompt_seed >= 2;
  });
  n.clear();
  for (const auto& s : cap_per_category(gen, 10)) ++n[{s.category_id, s.stance}];
  CHECK(n[{"cat1", Stance::value}] == 2);
  CHECK(n[{"cat1", Stance::counter_value}] == 8);
}

TEST_CASE("full build over 19 categories x 200 contents") {
  const auto& reg = fixtures::sexism_registry();
  const auto gen = fake_generated(reg, 100);
  const auto pool = mock::make_seed_pool(reg);
  const auto human = mock::make_human_corpus(reg, 400);
  DatasetConfig cfg;
  cfg.build_seed = 21;
  cfg.include_seed_pool = false;
  BuildStats stats;
  const auto b = build_bundle(gen, pool, human, reg, cfg, &stats);
  CHECK(stats.generated_used == 3800);
  auto all = b.train;
  all.insert(all.end(), b.val.begin(), b.val.end());
  const auto n = label_counts(all);
  CHECK(n[0] == 3800);
  CHECK(n[1] == 3800);
  CHECK(n[2] == 3800);
  const auto lt = label_counts(b.test);
  CHECK(lt[0] == lt[1]);
  CHECK(lt[1] == lt[2]);
  CHECK(b == build_bundle(gen, pool, human, reg, cfg));

  cfg.include_seed_pool = true;
  const auto with_pool = build_bundle(gen, pool, human, reg, cfg, &stats);
  CHECK(stats.seed_pool_used == pool.size());
  CHECK(with_pool.train.size() + with_pool.val.size() == 3 * (3800 + pool.size()));
}

TEST_CASE("human contents that are seed examples stay out of the test set") {
  const auto reg = fixtures::toy_registry(3);
  const auto pool = mock::make_seed_pool(reg);
  auto human = mock::make_human_corpus(reg, 30);
  const auto seed_copy = pool.all().front();
  human.push_back({seed_copy.content, {seed_copy.category_id}});
  BuildStats stats;
  const auto b = build_bundle(fake_generated(reg, 5), pool, human, reg, DatasetConfig{}, &stats);
  CHECK(stats.human_excluded_as_seed == 1);
  for (const auto& t : b.test) CHECK(t.content != seed_copy.content);
}

TEST_CASE("holdout removes every trace of the held-out categories from training") {
  const auto& reg = fixtures::sexism_registry();
  const auto gen = fake_generated(reg, 20);
  const auto pool = mock::make_seed_pool(reg);
  const auto human = mock::make_human_corpus(reg, 300, 0.2);
  DatasetConfig cfg;
  cfg.holdout = {"pay_gap", "mansplaining", "body_shaming"};
  const auto b = build_bundle(gen, pool, human, reg, cfg);
  const std::unordered_set<std::string> held(cfg.holdout.begin(), cfg.holdout.end());
  REQUIRE_FALSE(b.train.empty());
  REQUIRE_FALSE(b.test.empty());
  for (const auto* split : {&b.train, &b.val}) {
    for (const auto& t : *split) {
      REQUIRE_FALSE(held.count(t.category_id));
      REQUIRE_FALSE(held.count(t.content_category_id));
      for (const auto& id : cfg.holdout) {
        REQUIRE(t.value != reg.at(id).value);
        REQUIRE(t.value != reg.at(id).counter_value);
      }
    }
  }
  for (const auto& t : b.test) REQUIRE(held.count(t.content_category_id));
  CHECK(b.holdout_categories == cfg.holdout);

  cfg.holdout = {"nope"};
  CHECK_THROWS_AS(build_bundle(gen, pool, human, reg, cfg), ConfigError);
  BundleInputs in{pair_labels(gen, reg), {}, 1};
  CHECK_THROWS_AS(apply_holdout(in, {}, reg), ConfigError);
  CHECK_THROWS_AS(apply_holdout(in, reg.ids(), reg), ConfigError);
}

TEST_CASE("triplet files round-trip") {
  fixtures::TempDir tmp("dataset");
  const auto reg = fixtures::toy_registry(3);
  auto ts = pair_labels(fake_generated(reg, 2), reg);
  const auto na = synthesize_na(fake_generated(reg, 2), reg, 1, 1);
  ts.insert(ts.end(), na.begin(), na.end());
  write_file(tmp / "t.jsonl", triplets_to_jsonl(ts));
  CHECK(load_triplets(tmp / "t.jsonl") == ts);
  const auto first = json::parse(read_file(tmp / "t.jsonl").substr(0, read_file(tmp / "t.jsonl").find('\n')));
  for (const char* k : {"content", "value", "label", "category_id", "content_category_id", "stance", "origin"}) {
    CHECK(first.contains(k));
  }
  write_file(tmp / "bad.jsonl", "{\"content\":\"a\"}\n");
  CHECK_THROWS_WITH(load_triplets(tmp / "bad.jsonl"), Catch::Matchers::ContainsSubstring("bad.jsonl:1"));
}

TEST_CASE("human data loader validates category ids") {
  fixtures::TempDir tmp("human");
  const auto reg = fixtures::toy_registry(2);
  write_file(tmp / "h.jsonl", "{\"content\":\"a b c\",\"categories\":[\"cat0\"]}\n\n"
                              "{\"content\":\"d e f\",\"categories\":[\"cat7\"]}\n");
  CHECK_THROWS_WITH(load_human_data(tmp / "h.jsonl", reg), Catch::Matchers::ContainsSubstring("h.jsonl:3"));
}

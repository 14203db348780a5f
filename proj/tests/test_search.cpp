#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/mock_backend.hpp"
#include "promptopt/run_store.hpp"
#include "promptopt/search.hpp"
#include "promptopt/tasks.hpp"
#include "promptopt/templates.hpp"
#include "promptopt/util.hpp"
#include "support.hpp"

using namespace promptopt;
using nlohmann::json;

namespace {

const char* kAlphaPrompt = "Answer with one option letter. Remember to consider kw-alpha.";
const char* kFullPrompt = "Consider kw-alpha and kw-beta, then answer with one option letter.";

Dataset budget_dataset() {
  return load_dataset(test_support::data_dir() / "budget_task.jsonl");
}

Gateway budget_gateway(GatewayOptions options = {}) {
  return test_support::make_gateway(
      MockBackend::from_file(test_support::data_dir() / "mock_budget.json"), std::move(options));
}

// Engine plus everything it borrows, kept alive together.
struct Rig {
  Dataset dataset;
  TemplateRegistry templates;
  Gateway gateway;
  RunStore store;
  SearchEngine engine;

  Rig(const std::string& dataset_file, const std::string& mock_file,
      const std::filesystem::path& run_dir, SearchConfig config = {}, GatewayOptions options = {})
      : dataset(load_dataset(test_support::data_dir() / dataset_file)),
        templates(TemplateRegistry::builtin()),
        gateway(test_support::make_gateway(
            MockBackend::from_file(test_support::data_dir() / mock_file), std::move(options))),
        store(run_dir),
        engine(gateway, templates, dataset, AnswerRule{}, config, store) {}
};

EvaluationReport scored_report(Rig& rig, const std::string& prompt, const std::string& split) {
  Evaluator evaluator(rig.gateway, rig.dataset, AnswerRule{});
  return evaluator.evaluate_prompt("init", prompt, split);
}

std::function<std::string()> id_counter() {
  auto next = std::make_shared<int>(0);
  return [next] {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%04d", ++*next);
    return std::string(buf);
  };
}

std::vector<json> candidate_rows(const std::filesystem::path& run_dir) {
  std::vector<json> rows;
  for (const auto& line : split_lines(read_file(run_dir / "candidates.jsonl"))) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

std::vector<double> trace_best_validation(const std::filesystem::path& run_dir) {
  std::vector<double> out;
  std::vector<std::string> lines = split_lines(read_file(run_dir / "trace.csv"));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto first = lines[i].find(',');
    auto second = lines[i].find(',', first + 1);
    out.push_back(std::stod(lines[i].substr(first + 1, second - first - 1)));
  }
  return out;
}

GatewayOptions quiet_retries() {
  GatewayOptions options;
  options.sleeper = [](std::chrono::milliseconds) {};
  return options;
}

}  // namespace

TEST_CASE("configuration bounds are enforced before any traffic") {
  auto reject = [](auto mutate, const char* fragment) {
    SearchConfig config;
    mutate(config);
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains(fragment), ConfigError);
  };
  reject([](SearchConfig& c) { c.k = 0; }, "search.k");
  reject([](SearchConfig& c) { c.m = 0; }, "search.m");
  reject([](SearchConfig& c) { c.n_strategies = 0; }, "search.n_strategies");
  reject([](SearchConfig& c) { c.expansion_per_parent = 2; }, "at least 4");
  reject([](SearchConfig& c) { c.expansion_per_parent = 7; }, "even");
  reject([](SearchConfig& c) { c.candidates_per_step = 0; }, "search.candidates_per_step");
  reject([](SearchConfig& c) { c.total_steps = 0; }, "search.total_steps");
  reject([](SearchConfig& c) { c.cache_capacity = 0; }, "search.cache_capacity");
  reject([](SearchConfig& c) { c.top_results = 0; }, "search.top_results");
  reject([](SearchConfig& c) { c.ucb.sample_size = 0; }, "search.ucb.sample_size");
  reject([](SearchConfig& c) { c.ucb.rounds = 0; }, "search.ucb.rounds");
  reject([](SearchConfig& c) { c.ucb.exploration = -0.1; }, "search.ucb.exploration");
  reject([](SearchConfig& c) { c.validation_split.clear(); }, "validation_split");
  reject([](SearchConfig& c) { c.test_split.clear(); }, "test_split");
  SearchConfig fine;
  CHECK_NOTHROW(fine.validate());
}

TEST_CASE("the config snapshot changes exactly when a setting changes") {
  SearchConfig a, b;
  CHECK(a.snapshot_text() == b.snapshot_text());
  CHECK(a.snapshot_text().find("search.k = 3\n") != std::string::npos);
  CHECK(a.snapshot_text().find("seed = 0\n") != std::string::npos);
  b.k = 4;
  CHECK(a.snapshot_text() != b.snapshot_text());
}

TEST_CASE("expansion produces the full child family from one parent") {
  test_support::TempDir tmp;
  Rig rig("budget_task.jsonl", "mock_budget.json", tmp.path() / "run");

  EvaluationReport report = scored_report(rig, kAlphaPrompt, "validation");
  REQUIRE(report.correct_ids.size() == 10);

  PromptCandidate parent;
  parent.id = "init";
  parent.text = kAlphaPrompt;
  ExpansionResult er = rig.engine.expand(parent, report, 1, 0, id_counter(), PromptCache(5));

  REQUIRE(er.children.size() == 10);
  CHECK(er.log.shortfall == 0);
  CHECK(er.log.warnings.empty());

  // 4 positive rewrites, 4 negative rewrites, the hybrid, the paraphrase.
  for (int i = 0; i < 4; ++i) CHECK(er.children[i].origin == Origin::optimized_positive);
  for (int i = 4; i < 8; ++i) CHECK(er.children[i].origin == Origin::optimized_negative);
  CHECK(er.children[8].origin == Origin::hybrid);
  CHECK(er.children[9].origin == Origin::paraphrase);
  for (int i = 0; i < 10; ++i) {
    char expect[16];
    std::snprintf(expect, sizeof(expect), "c%04d", i + 1);
    CHECK(er.children[i].id == expect);
    CHECK(er.children[i].iteration == 1);
  }
  for (int i = 0; i < 8; ++i) {
    CHECK(er.children[i].parent_ids == std::vector<std::string>{"init"});
  }
  CHECK(er.children[8].parent_ids == std::vector<std::string>{"c0001", "c0005"});
  CHECK(er.children[9].parent_ids == std::vector<std::string>{"c0009"});

  // With injection disabled the rewrites echo the parent; the paraphrase is
  // the only textual change.
  for (int i = 0; i < 9; ++i) CHECK(er.children[i].text == kAlphaPrompt);
  CHECK(er.children[9].text == "Stay systematic. " + std::string(kAlphaPrompt));

  // 3 cases per partition, 3 experiences each.
  REQUIRE(er.log.experiences.size() == 18);
  CHECK(er.log.experiences[0].id == "s1.p0.pos.e0");
  CHECK(er.log.experiences[8].id == "s1.p0.pos.e8");
  CHECK(er.log.experiences[9].id == "s1.p0.neg.e0");
  CHECK(er.log.experiences[17].id == "s1.p0.neg.e8");
  for (int i = 0; i < 9; ++i) CHECK(er.log.experiences[i].polarity == Polarity::positive);
  for (int i = 9; i < 18; ++i) CHECK(er.log.experiences[i].polarity == Polarity::negative);

  // 3 strategies per experience, exactly one selected per batch.
  REQUIRE(er.log.strategies.size() == 54);
  int selected = 0;
  for (const auto& s : er.log.strategies) selected += s.selected ? 1 : 0;
  CHECK(selected == 18);
  std::set<std::string> strategy_experiences;
  for (const auto& s : er.log.strategies) strategy_experiences.insert(s.experience_id);
  CHECK(strategy_experiences.size() == 18);
}

TEST_CASE("a parent with no failures mirrors onto the positive side") {
  test_support::TempDir tmp;
  Rig rig("budget_task.jsonl", "mock_budget.json", tmp.path() / "run");

  EvaluationReport report = scored_report(rig, kFullPrompt, "validation");
  REQUIRE(report.incorrect_ids.empty());

  PromptCandidate parent;
  parent.id = "init";
  parent.text = kFullPrompt;
  ExpansionResult er = rig.engine.expand(parent, report, 1, 0, id_counter(), PromptCache(5));

  // Negative slots are skipped: 4 missing rewrites plus the impossible
  // hybrid; the paraphrase falls back to the best positive child.
  REQUIRE(er.children.size() == 5);
  CHECK(er.log.shortfall == 5);
  for (int i = 0; i < 4; ++i) CHECK(er.children[i].origin == Origin::optimized_positive);
  CHECK(er.children[4].origin == Origin::paraphrase);
  CHECK(er.children[4].parent_ids == std::vector<std::string>{"c0001"});

  bool noted_slots = false, noted_crossover = false;
  for (const auto& w : er.log.warnings) {
    if (w.find("optimized_negative") != std::string::npos &&
        w.find("0 of 4") != std::string::npos) {
      noted_slots = true;
    }
    if (w.find("crossover") != std::string::npos) noted_crossover = true;
  }
  CHECK(noted_slots);
  CHECK(noted_crossover);

  // Only positive experiences were collected.
  CHECK(er.log.experiences.size() == 9);
  CHECK(er.log.strategies.size() == 27);
}

TEST_CASE("screening passes small fields through untouched") {
  test_support::TempDir tmp;
  Rig rig("budget_task.jsonl", "mock_budget.json", tmp.path() / "run");
  long before = rig.gateway.snapshot_usage().evaluator.api_calls;

  ScreeningOutcome three = rig.engine.screen_ucb({"a", "b", "c"}, 1);
  CHECK(three.survivors == std::vector<std::size_t>{0, 1, 2});
  CHECK(three.example_calls == 0);
  CHECK(three.rounds_run == 0);

  ScreeningOutcome five = rig.engine.screen_ucb({kAlphaPrompt, kAlphaPrompt, kAlphaPrompt,
                                                 kAlphaPrompt, kAlphaPrompt},
                                                1);
  CHECK(five.survivors.size() == 5);
  CHECK(five.example_calls == 0);
  CHECK(rig.gateway.snapshot_usage().evaluator.api_calls == before);
}

TEST_CASE("screening keeps the strong arm and pays one round for a near cut") {
  test_support::TempDir tmp;
  Rig rig("budget_task.jsonl", "mock_budget.json", tmp.path() / "run");

  std::string weak = "No keywords in this prompt at all.";
  std::vector<std::string> arms{weak, weak + " v2", weak + " v3", kFullPrompt, weak + " v4",
                                weak + " v5"};
  ScreeningOutcome out = rig.engine.screen_ucb(arms, 1);
  // 6 arms cut straight to 5: one shared round of 20 samples each.
  CHECK(out.rounds_run == 1);
  CHECK(out.example_calls == 120);
  REQUIRE(out.survivors.size() == 5);
  CHECK(std::count(out.survivors.begin(), out.survivors.end(), 3) == 1);
  CHECK(std::count(out.survivors.begin(), out.survivors.end(), 5) == 0);
  CHECK(std::is_sorted(out.survivors.begin(), out.survivors.end()));
}

TEST_CASE("halving runs until one arm stands when the quota is one") {
  test_support::TempDir tmp;
  SearchConfig config;
  config.candidates_per_step = 1;
  Rig rig("budget_task.jsonl", "mock_budget.json", tmp.path() / "run", config);

  std::vector<std::string> arms(10, kAlphaPrompt);
  ScreeningOutcome out = rig.engine.screen_ucb(arms, 1);
  // 10 -> 5 -> 3 -> 2 -> 1 arms; 20 samples per surviving arm per round.
  CHECK(out.rounds_run == 4);
  CHECK(out.example_calls == 200 + 100 + 60 + 40);
  CHECK(out.survivors == std::vector<std::size_t>{0});
  CHECK(rig.gateway.snapshot_usage().evaluator.api_calls == 400);
}

TEST_CASE("a default run on the stable task is fully accounted") {
  test_support::TempDir tmp;
  const auto dir = tmp.path() / "run";
  Rig rig("budget_task.jsonl", "mock_budget.json", dir);

  RunResult result = rig.engine.run(kAlphaPrompt);
  CHECK(result.finalized);
  CHECK(result.steps_completed == 7);
  CHECK(result.generated == 310);
  CHECK(result.shortfalls == 0);
  CHECK(result.initial.validation == doctest::Approx(10.0 / 24.0));
  REQUIRE(result.initial.test.has_value());
  CHECK(*result.initial.test == doctest::Approx(5.0 / 12.0));

  // Every rewrite echoes the parent here, so the ranking is the first five
  // survivors, all carrying the parent's score.
  REQUIRE(result.top.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(result.top[i].validation == doctest::Approx(10.0 / 24.0));
    REQUIRE(result.top[i].test.has_value());
    CHECK(*result.top[i].test == doctest::Approx(5.0 / 12.0));
  }
  CHECK(result.top[0].id == "c0001");
  CHECK(result.top[4].id == "c0005");

  // Stage ledger: 124 generation calls per expansion, 1 + 6*5 expansions;
  // screening pays 200 for the first step and 1900 for each 50-arm step; the
  // survivors and the final ranking all hit the report cache.
  CHECK(result.counters.generation.completed == 124 + 6 * 620);
  CHECK(result.counters.generation.calls == result.counters.generation.completed);
  CHECK(result.counters.screening.completed == 200 + 6 * 1900);
  CHECK(result.counters.evaluation.completed == 24);
  CHECK(result.counters.test.completed == 12);
  CHECK(result.counters.generation.tokens > 0);
  CHECK(result.counters.screening.tokens > 0);

  // On-disk layout.
  CHECK(rig.store.has_manifest());
  RunManifest manifest = rig.store.read_manifest();
  CHECK(manifest.dataset_fingerprint == dataset_fingerprint(rig.dataset));
  CHECK(manifest.initial_prompt_hash == content_hash(kAlphaPrompt));
  CHECK(rig.store.read_config_snapshot() == SearchConfig{}.snapshot_text());

  std::vector<json> rows = candidate_rows(dir);
  REQUIRE(rows.size() == 310);
  CHECK(rows[0].at("id") == "c0001");
  CHECK(rows[309].at("id") == "c0310");
  CHECK(rows[0].at("iteration") == 1);
  CHECK(rows[10].at("iteration") == 2);
  CHECK(rows[309].at("iteration") == 7);
  CHECK(rows[0].at("origin") == "optimized_positive");
  CHECK(rows[8].at("origin") == "hybrid");
  CHECK(rows[9].at("origin") == "paraphrase");
  CHECK(rows[0].at("parents") == json::array({"init"}));
  CHECK(rows[0].at("hash") == content_hash(rows[0].at("text").get<std::string>()));

  int scored = 0;
  for (const auto& row : rows) scored += row.at("validation").is_null() ? 0 : 1;
  CHECK(scored == 35);  // five survivors per step reach full evaluation

  CHECK(rig.store.trace_row_count() == 36);  // initial row plus 7*5 survivor rows
  auto state = rig.store.load_state();
  REQUIRE(state.has_value());
  CHECK(state->at("completed_step") == 7);
  CHECK(state->at("candidate_rows") == 310);

  json final_result = json::parse(read_file(dir / "result.json"));
  CHECK(final_result.at("generated") == 310);
  CHECK(final_result.at("shortfalls") == 0);
  CHECK(final_result.at("top").size() == 5);
  CHECK(final_result.at("counters").at("screening").at("completed") == 11600);

  // Per-step logs exist for every step.
  for (int s = 1; s <= 7; ++s) {
    CAPTURE(s);
    CHECK(std::filesystem::exists(dir / ("iter" + std::to_string(s)) / "experiences.jsonl"));
    CHECK(std::filesystem::exists(dir / ("iter" + std::to_string(s)) / "strategies.jsonl"));
  }
}

TEST_CASE("the same seed writes byte-identical artifacts") {
  test_support::TempDir tmp;
  {
    Rig first("budget_task.jsonl", "mock_budget.json", tmp.path() / "a");
    first.engine.run(kAlphaPrompt);
  }
  {
    Rig second("budget_task.jsonl", "mock_budget.json", tmp.path() / "b");
    second.engine.run(kAlphaPrompt);
  }
  for (const char* file : {"candidates.jsonl", "trace.csv", "result.json", "config.snapshot"}) {
    CAPTURE(file);
    CHECK(read_file(tmp.path() / "a" / file) == read_file(tmp.path() / "b" / file));
  }
}

TEST_CASE("a clean abort resumes into the same artifacts") {
  test_support::TempDir tmp;
  {
    Rig reference("budget_task.jsonl", "mock_budget.json", tmp.path() / "ref");
    reference.engine.run(kAlphaPrompt);
  }
  {
    Rig interrupted("budget_task.jsonl", "mock_budget.json", tmp.path() / "res");
    RunResult partial = interrupted.engine.run(kAlphaPrompt, false, 3);
    CHECK_FALSE(partial.finalized);
    CHECK(partial.steps_completed == 3);
    CHECK_FALSE(std::filesystem::exists(tmp.path() / "res" / "result.json"));
  }
  {
    // Fresh process: new gateway, new engine, same directory.
    Rig resumed("budget_task.jsonl", "mock_budget.json", tmp.path() / "res");
    RunResult result = resumed.engine.run(kAlphaPrompt, true);
    CHECK(result.finalized);
    CHECK(result.steps_completed == 7);
    CHECK(result.counters.generation.completed == 124 + 6 * 620);
  }
  for (const char* file : {"candidates.jsonl", "trace.csv", "result.json"}) {
    CAPTURE(file);
    CHECK(read_file(tmp.path() / "res" / file) == read_file(tmp.path() / "ref" / file));
  }
}

TEST_CASE("a mid-step crash resumes into the same artifacts") {
  test_support::TempDir tmp;
  {
    Rig reference("budget_task.jsonl", "mock_budget.json", tmp.path() / "ref");
    reference.engine.run(kAlphaPrompt);
  }
  {
    // The backend dies partway through step 2's generation phase.
    write_file(tmp.path() / "dying.json",
               R"({"mode": "synthetic", "seed": 17, "inject_probability": 0.0,)"
               R"( "fail_after_calls": 500})");
    Dataset dataset = budget_dataset();
    TemplateRegistry templates = TemplateRegistry::builtin();
    Gateway gateway = test_support::make_gateway(MockBackend::from_file(tmp.path() / "dying.json"),
                                                 quiet_retries());
    RunStore store(tmp.path() / "res");
    SearchEngine engine(gateway, templates, dataset, AnswerRule{}, SearchConfig{}, store);
    CHECK_THROWS_AS(engine.run(kAlphaPrompt), GatewayError);
    CHECK(store.load_state().has_value());
    CHECK(store.load_state()->at("completed_step") == 1);
  }
  {
    Rig resumed("budget_task.jsonl", "mock_budget.json", tmp.path() / "res");
    RunResult result = resumed.engine.run(kAlphaPrompt, true);
    CHECK(result.finalized);
    CHECK(result.generated == 310);
  }
  for (const char* file : {"candidates.jsonl", "trace.csv", "result.json"}) {
    CAPTURE(file);
    CHECK(read_file(tmp.path() / "res" / file) == read_file(tmp.path() / "ref" / file));
  }
}

TEST_CASE("resume refuses to continue under changed conditions") {
  test_support::TempDir tmp;
  const auto dir = tmp.path() / "run";
  {
    Rig rig("budget_task.jsonl", "mock_budget.json", dir);
    rig.engine.run(kAlphaPrompt, false, 1);
  }

  auto attempt = [&](SearchConfig config, const std::string& prompt, const char* fragment) {
    Rig rig("budget_task.jsonl", "mock_budget.json", dir, config);
    CHECK_THROWS_WITH_AS(rig.engine.run(prompt, true), doctest::Contains(fragment), ConfigError);
  };
  SearchConfig reseeded;
  reseeded.seed = 1;
  attempt(reseeded, kAlphaPrompt, "seed changed");
  attempt(SearchConfig{}, "different starting prompt", "initial prompt changed");
  SearchConfig reshaped;
  reshaped.k = 2;
  attempt(reshaped, kAlphaPrompt, "configuration changed");

  {
    // Same settings, different data.
    TemplateRegistry templates = TemplateRegistry::builtin();
    Dataset other = budget_dataset();
    other.examples[0].gold = other.examples[0].gold == "A" ? "B" : "A";
    Gateway gateway = budget_gateway();
    RunStore store(dir);
    SearchEngine engine(gateway, templates, other, AnswerRule{}, SearchConfig{}, store);
    CHECK_THROWS_WITH_AS(engine.run(kAlphaPrompt, true), doctest::Contains("dataset differs"),
                         ConfigError);
  }
  {
    // Starting over in a used directory needs an explicit choice.
    Rig rig("budget_task.jsonl", "mock_budget.json", dir);
    CHECK_THROWS_WITH_AS(rig.engine.run(kAlphaPrompt, false),
                         doctest::Contains("already holds a run"), ConfigError);
  }
  {
    Rig rig("budget_task.jsonl", "mock_budget.json", tmp.path() / "fresh");
    CHECK_THROWS_WITH_AS(rig.engine.run(kAlphaPrompt, true), doctest::Contains("nothing to resume"),
                         ConfigError);
  }
}

TEST_CASE("keyword injection drives the score to the ceiling") {
  test_support::TempDir tmp;
  const auto dir = tmp.path() / "run";
  Rig rig("convergence_task.jsonl", "mock_convergence.json", dir);

  RunResult result = rig.engine.run(
      "Answer with one option letter. Remember to consider kw-alpha.");
  CHECK(result.finalized);
  CHECK(result.steps_completed == 7);
  REQUIRE_FALSE(result.top.empty());
  CHECK(result.top.front().validation == doctest::Approx(1.0));
  CHECK(result.top.size() == 5);

  // The anytime curve never loses ground.
  std::vector<double> curve = trace_best_validation(dir);
  REQUIRE(curve.size() == 36);
  CHECK(std::is_sorted(curve.begin(), curve.end()));
  CHECK(curve.front() == doctest::Approx(8.0 / 24.0));
  CHECK(curve.back() == doctest::Approx(1.0));
}

TEST_CASE("a perfect starting prompt shrinks every expansion") {
  test_support::TempDir tmp;
  const auto dir = tmp.path() / "run";
  Rig rig("budget_task.jsonl", "mock_budget.json", dir);

  RunResult result = rig.engine.run(kFullPrompt);
  CHECK(result.finalized);
  // Each expansion yields 5 children instead of 10 and logs 5 unfilled slots.
  CHECK(result.generated == 5 + 6 * 25);
  CHECK(result.shortfalls == 5 + 6 * 25);
  CHECK(result.initial.validation == doctest::Approx(1.0));
  CHECK(rig.store.trace_row_count() == 36);
  CHECK(candidate_rows(dir).size() == 155);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "promptopt/evaluation.hpp"
#include "promptopt/mock_backend.hpp"
#include "promptopt/tasks.hpp"
#include "promptopt/util.hpp"
#include "support.hpp"

using namespace promptopt;

namespace {

const char* kAlphaPrompt = "Answer with one option letter. Remember to consider kw-alpha.";

Dataset budget_dataset() {
  return load_dataset(test_support::data_dir() / "budget_task.jsonl");
}

Gateway budget_gateway() {
  return test_support::make_gateway(
      MockBackend::from_file(test_support::data_dir() / "mock_budget.json"));
}

// Minimal in-memory store for exercising the persistence hook.
class MemoryStore : public ReportStore {
 public:
  std::optional<EvaluationReport> load_report(const std::string& key) const override {
    ++loads;
    auto it = reports.find(key);
    if (it == reports.end()) return std::nullopt;
    return it->second;
  }
  void save_report(const EvaluationReport& report) const override {
    ++saves;
    reports[report.prompt_hash] = report;
  }

  mutable std::map<std::string, EvaluationReport> reports;
  mutable int loads = 0;
  mutable int saves = 0;
};

EvaluationReport report_from(const std::vector<std::pair<std::string, bool>>& verdicts) {
  EvaluationReport r;
  for (const auto& [id, correct] : verdicts) {
    r.verdicts.push_back({id, std::nullopt, correct});
    (correct ? r.correct_ids : r.incorrect_ids).push_back(id);
  }
  return r;
}

}  // namespace

TEST_CASE("evaluate_prompt scores a split and partitions verdicts") {
  Dataset data = budget_dataset();
  Gateway gateway = budget_gateway();
  Evaluator evaluator(gateway, data, AnswerRule{});

  EvaluationReport report = evaluator.evaluate_prompt("p0", kAlphaPrompt, "validation");
  CHECK(report.prompt_id == "p0");
  CHECK(report.split == "validation");
  CHECK(report.prompt_hash == report_cache_key(kAlphaPrompt, "validation"));
  CHECK(report.verdicts.size() == 24);
  CHECK(report.accuracy == doctest::Approx(10.0 / 24.0));

  // Only the items whose hidden keyword appears in the prompt come back right.
  REQUIRE(report.correct_ids.size() == 10);
  REQUIRE(report.incorrect_ids.size() == 14);
  for (int i = 0; i < 10; ++i) {
    CHECK(report.correct_ids[static_cast<std::size_t>(i)] ==
          "bgt-v" + std::string(i + 1 < 10 ? "0" : "") + std::to_string(i + 1));
  }
  // Verdicts follow split order and predictions carry the parsed letter.
  CHECK(report.verdicts[0].example_id == "bgt-v01");
  CHECK(report.verdicts[0].correct);
  REQUIRE(report.verdicts[0].predicted.has_value());
  CHECK(*report.verdicts[0].predicted == "B");
  // The miss reply names a letter outside the option range, so nothing parses.
  CHECK_FALSE(report.verdicts[10].predicted.has_value());
  CHECK_FALSE(report.verdicts[10].correct);
}

TEST_CASE("a prompt naming both keywords clears the whole split") {
  Dataset data = budget_dataset();
  Gateway gateway = budget_gateway();
  Evaluator evaluator(gateway, data, AnswerRule{});
  EvaluationReport report = evaluator.evaluate_prompt(
      "p1", "Mind kw-alpha and kw-beta before answering.", "validation");
  CHECK(report.accuracy == 1.0);
  CHECK(report.incorrect_ids.empty());
}

TEST_CASE("repeated evaluation of the same prompt and split issues no calls") {
  Dataset data = budget_dataset();
  Gateway gateway = budget_gateway();
  Evaluator evaluator(gateway, data, AnswerRule{});

  evaluator.evaluate_prompt("p0", kAlphaPrompt, "validation");
  long calls_after_first = gateway.snapshot_usage().evaluator.api_calls;
  CHECK(calls_after_first == 24);

  EvaluationReport again = evaluator.evaluate_prompt("renamed", kAlphaPrompt, "validation");
  CHECK(gateway.snapshot_usage().evaluator.api_calls == calls_after_first);
  CHECK(again.prompt_id == "renamed");
  CHECK(again.accuracy == doctest::Approx(10.0 / 24.0));

  // A different split is a different cache entry.
  evaluator.evaluate_prompt("p0", kAlphaPrompt, "test");
  CHECK(gateway.snapshot_usage().evaluator.api_calls == calls_after_first + 12);
}

TEST_CASE("reports round-trip through the persistence hook") {
  Dataset data = budget_dataset();
  MemoryStore store;
  {
    Gateway gateway = budget_gateway();
    Evaluator evaluator(gateway, data, AnswerRule{}, &store);
    evaluator.evaluate_prompt("p0", kAlphaPrompt, "validation");
    CHECK(store.saves == 1);
  }
  {
    // Fresh evaluator, fresh gateway: the stored report must satisfy the
    // request without any backend traffic.
    Gateway gateway = budget_gateway();
    Evaluator evaluator(gateway, data, AnswerRule{}, &store);
    EvaluationReport report = evaluator.evaluate_prompt("p9", kAlphaPrompt, "validation");
    CHECK(gateway.snapshot_usage().evaluator.api_calls == 0);
    CHECK(report.prompt_id == "p9");
    CHECK(report.accuracy == doctest::Approx(10.0 / 24.0));
    CHECK(store.saves == 1);
  }
}

TEST_CASE("evaluate_on_ids bypasses the cache and aligns with the id order") {
  Dataset data = budget_dataset();
  Gateway gateway = budget_gateway();
  Evaluator evaluator(gateway, data, AnswerRule{});
  evaluator.evaluate_prompt("p0", kAlphaPrompt, "validation");
  long before = gateway.snapshot_usage().evaluator.api_calls;

  std::vector<std::string> ids{"bgt-v12", "bgt-v03", "bgt-v20", "bgt-v07"};
  std::vector<bool> hits = evaluator.evaluate_on_ids(kAlphaPrompt, ids);
  CHECK(gateway.snapshot_usage().evaluator.api_calls == before + 4);
  REQUIRE(hits.size() == 4);
  CHECK_FALSE(hits[0]);
  CHECK(hits[1]);
  CHECK_FALSE(hits[2]);
  CHECK(hits[3]);

  // Repeating the sample costs again: screening never reads the report cache.
  evaluator.evaluate_on_ids(kAlphaPrompt, ids);
  CHECK(gateway.snapshot_usage().evaluator.api_calls == before + 8);
}

TEST_CASE("report cache keys separate prompts and splits") {
  CHECK(report_cache_key("a", "validation") != report_cache_key("a", "test"));
  CHECK(report_cache_key("a", "validation") != report_cache_key("b", "validation"));
  CHECK(report_cache_key("a", "validation") == report_cache_key("a", "validation"));
  CHECK(report_cache_key("ab", "c") != report_cache_key("a", "bc"));
  CHECK(report_cache_key("x", "y").size() == 16);
}

TEST_CASE("correction_rates counts flips in both directions") {
  EvaluationReport pre = report_from({{"a", true}, {"b", true}, {"c", false}, {"d", false}});
  EvaluationReport post = report_from({{"a", true}, {"b", false}, {"c", true}, {"d", false}});
  DriftMetrics m = correction_rates(pre, post);
  CHECK(m.pre_correct == 2);
  CHECK(m.pre_incorrect == 2);
  CHECK(m.adverse_count == 1);
  CHECK(m.beneficial_count == 1);
  REQUIRE(m.acr.has_value());
  REQUIRE(m.bcr.has_value());
  CHECK(*m.acr == doctest::Approx(0.5));
  CHECK(*m.bcr == doctest::Approx(0.5));
}

TEST_CASE("rates stay exact fractions of the pre partitions") {
  std::vector<std::pair<std::string, bool>> pre_v, post_v;
  for (int i = 0; i < 21; ++i) {
    std::string id = "c" + std::to_string(i);
    pre_v.emplace_back(id, true);
    post_v.emplace_back(id, i >= 7);  // 7 of 21 regress
  }
  for (int i = 0; i < 9; ++i) {
    std::string id = "i" + std::to_string(i);
    pre_v.emplace_back(id, false);
    post_v.emplace_back(id, i < 3);  // 3 of 9 recover
  }
  DriftMetrics m = correction_rates(report_from(pre_v), report_from(post_v));
  CHECK(*m.acr == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(*m.bcr == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(m.adverse_count == 7);
  CHECK(m.beneficial_count == 3);
}

TEST_CASE("undefined denominators stay undefined") {
  EvaluationReport all_correct = report_from({{"a", true}, {"b", true}});
  EvaluationReport all_wrong = report_from({{"a", false}, {"b", false}});

  DriftMetrics down = correction_rates(all_correct, all_wrong);
  REQUIRE(down.acr.has_value());
  CHECK(*down.acr == doctest::Approx(1.0));
  CHECK_FALSE(down.bcr.has_value());
  CHECK(down.pre_incorrect == 0);

  DriftMetrics up = correction_rates(all_wrong, all_correct);
  CHECK_FALSE(up.acr.has_value());
  REQUIRE(up.bcr.has_value());
  CHECK(*up.bcr == doctest::Approx(1.0));
}

TEST_CASE("mismatched reports are rejected") {
  EvaluationReport pre = report_from({{"a", true}, {"b", false}});
  EvaluationReport short_post = report_from({{"a", true}});
  CHECK_THROWS_WITH_AS(correction_rates(pre, short_post),
                       doctest::Contains("different example counts"), DataError);

  EvaluationReport renamed = report_from({{"a", true}, {"zz", false}});
  CHECK_THROWS_WITH_AS(correction_rates(pre, renamed), doctest::Contains("'b'"), DataError);
}

TEST_CASE("metrics ignore verdict order in the post report") {
  EvaluationReport pre = report_from({{"a", true}, {"b", true}, {"c", false}, {"d", false}});
  EvaluationReport post = report_from({{"d", true}, {"b", false}, {"a", true}, {"c", false}});
  DriftMetrics m = correction_rates(pre, post);
  CHECK(m.adverse_count == 1);
  CHECK(m.beneficial_count == 1);
}

TEST_CASE("post accuracy decomposes into the drift rates") {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + static_cast<int>(rng() % 120);
    std::vector<std::pair<std::string, bool>> pre_v, post_v;
    int post_correct = 0;
    for (int i = 0; i < n; ++i) {
      std::string id = "e" + std::to_string(i);
      bool pre_ok = rng() % 2 == 0;
      bool post_ok = rng() % 2 == 0;
      pre_v.emplace_back(id, pre_ok);
      post_v.emplace_back(id, post_ok);
      if (post_ok) ++post_correct;
    }
    EvaluationReport pre = report_from(pre_v);
    EvaluationReport post = report_from(post_v);
    DriftMetrics m = correction_rates(pre, post);

    double pre_acc = static_cast<double>(m.pre_correct) / n;
    double acr = m.acr.value_or(0.0);
    double bcr = m.bcr.value_or(0.0);
    double predicted = pre_acc - acr * (static_cast<double>(m.pre_correct) / n) +
                       bcr * (static_cast<double>(m.pre_incorrect) / n);
    CAPTURE(trial);
    CHECK(predicted == doctest::Approx(static_cast<double>(post_correct) / n).epsilon(1e-9));
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "promptopt/cost.hpp"
#include "promptopt/mock_backend.hpp"
#include "promptopt/run_store.hpp"
#include "promptopt/tasks.hpp"
#include "promptopt/templates.hpp"
#include "promptopt/util.hpp"
#include "support.hpp"

using namespace promptopt;

TEST_CASE("the default search shape prices one step small and the rest wide") {
  SearchConfig config;
  CostParams params = CostParams::from_search_config(config, 300);
  CHECK(params.total_search == 310);
  CHECK(params.steps == 7);
  CHECK(params.rounds == 5);
  CHECK(params.sample_size == 20);
  CHECK(params.candidates == 5);
  CHECK(params.validation_size == 300);
  REQUIRE(params.screening_prompts.size() == 7);
  CHECK(params.screening_prompts[0] == 10);
  for (std::size_t s = 1; s < 7; ++s) CHECK(params.screening_prompts[s] == 50);
}

TEST_CASE("call estimates split by stage and add up") {
  SearchConfig config;
  CostParams params = CostParams::from_search_config(config, 300);
  CostEstimate e = estimate_cost(params);
  CHECK(e.generation_calls == 4340);    // 14 calls for each of 310 candidates
  CHECK(e.screening_calls == 31000);    // (10 + 6*50) arms, 5 rounds of 20
  CHECK(e.evaluation_calls == 10500);   // 7 steps, 5 survivors, 300 examples
  CHECK(e.total_calls == 45840);
  CHECK(e.total_tokens == 0.0);  // no rates supplied
}

TEST_CASE("token projections scale linearly with the measured rates") {
  SearchConfig config;
  CostParams params = CostParams::from_search_config(config, 300);
  params.tokens_per_generation = 100.0;
  params.tokens_per_example_eval = 10.0;
  CostEstimate e = estimate_cost(params);
  CHECK(e.generation_tokens == doctest::Approx(434000.0));
  CHECK(e.screening_tokens == doctest::Approx(310000.0));
  CHECK(e.evaluation_tokens == doctest::Approx(105000.0));
  CHECK(e.total_tokens == doctest::Approx(849000.0));

  params.tokens_per_generation *= 2.0;
  params.tokens_per_example_eval *= 2.0;
  CHECK(estimate_cost(params).total_tokens == doctest::Approx(2.0 * e.total_tokens));
}

TEST_CASE("a narrower search shrinks every stage") {
  SearchConfig config;
  config.expansion_per_parent = 4;
  config.candidates_per_step = 2;
  config.total_steps = 3;
  config.ucb.rounds = 2;
  config.ucb.sample_size = 10;
  CostParams params = CostParams::from_search_config(config, 50);
  CHECK(params.screening_prompts == std::vector<long>{4, 8, 8});
  CHECK(params.total_search == 20);
  CostEstimate e = estimate_cost(params);
  CHECK(e.generation_calls == 280);
  CHECK(e.screening_calls == 400);   // 20 arms * 2 rounds * 10 samples
  CHECK(e.evaluation_calls == 300);  // 3 steps * 2 survivors * 50 examples
}

TEST_CASE("reconcile flags only past the completed-call threshold") {
  CostEstimate e;
  e.total_calls = 1000;

  UsageLedger exact;
  exact.evaluator.api_calls = 1100;
  exact.evaluator.completed_calls = 1000;
  Reconciliation r = reconcile(e, exact);
  CHECK(r.estimated_calls == 1000);
  CHECK(r.actual_attempts == 1100);
  CHECK(r.actual_completed == 1000);
  CHECK(r.deviation_completed == doctest::Approx(0.0));
  CHECK(r.deviation_attempts == doctest::Approx(0.1));
  CHECK_FALSE(r.flagged);

  UsageLedger close;
  close.evaluator.completed_calls = 1249;
  CHECK_FALSE(reconcile(e, close).flagged);

  UsageLedger over;
  over.evaluator.completed_calls = 1260;
  Reconciliation flagged = reconcile(e, over);
  CHECK(flagged.deviation_completed == doctest::Approx(0.26));
  CHECK(flagged.flagged);

  UsageLedger under;
  under.evaluator.completed_calls = 700;
  CHECK(reconcile(e, under).flagged);

  // A custom threshold moves the line.
  CHECK_FALSE(reconcile(e, over, 0.5).flagged);
}

TEST_CASE("reconcile sums the stage counters the run kept") {
  CostEstimate e;
  e.total_calls = 600;
  StageCounters counters;
  counters.generation = {150, 140, 0};
  counters.screening = {300, 300, 0};
  counters.evaluation = {160, 160, 0};
  counters.test = {999, 999, 0};  // test traffic sits outside the estimate
  Reconciliation r = reconcile(e, counters);
  CHECK(r.actual_attempts == 610);
  CHECK(r.actual_completed == 600);
  CHECK_FALSE(r.flagged);
}

TEST_CASE("an empty estimate only matches an idle ledger") {
  CostEstimate zero;
  UsageLedger idle;
  CHECK_FALSE(reconcile(zero, idle).flagged);
  UsageLedger busy;
  busy.optimizer.completed_calls = 5;
  CHECK(reconcile(zero, busy).flagged);
}

TEST_CASE("calibration measures rates from a one-step pilot") {
  Dataset data = load_dataset(test_support::data_dir() / "budget_task.jsonl");
  Gateway gateway = test_support::make_gateway(
      MockBackend::from_file(test_support::data_dir() / "mock_budget.json"));
  TemplateRegistry templates = TemplateRegistry::builtin();
  test_support::TempDir tmp;

  SearchConfig config;
  CalibrationResult result =
      calibrate_rates(gateway, templates, data, AnswerRule{}, config,
                      "Answer with one option letter. Remember to consider kw-alpha.",
                      tmp.path() / "pilot");

  // 6 collect + 54 strategy + 54 judge + 8 rewrites + crossover + paraphrase.
  CHECK(result.pilot_generation_calls == 124);
  // 200 screening samples + 24 initial validation + 12 initial test; the
  // survivors re-use the parent's cached report.
  CHECK(result.pilot_eval_calls == 236);
  CHECK(result.tokens_per_generation > 0.0);
  CHECK(result.tokens_per_example_eval > 0.0);

  // Plugging the measured rates in yields a finite full-run projection.
  CostParams params = CostParams::from_search_config(config, 24);
  params.tokens_per_generation = result.tokens_per_generation;
  params.tokens_per_example_eval = result.tokens_per_example_eval;
  CHECK(estimate_cost(params).total_tokens > 0.0);

  // The scratch directory now holds a run, so a second pilot must refuse it.
  CHECK_THROWS_WITH_AS(
      calibrate_rates(gateway, templates, data, AnswerRule{}, config, "p", tmp.path() / "pilot"),
      doctest::Contains("already holds a run"), ConfigError);
}

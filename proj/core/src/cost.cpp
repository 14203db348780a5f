#include "promptopt/cost.hpp"

#include <cmath>

#include "promptopt/run_store.hpp"
#include "promptopt/util.hpp"

namespace promptopt {
namespace {

double deviation(long estimated, long actual) {
  if (estimated == 0) return actual == 0 ? 0.0 : 1.0;
  return std::abs(static_cast<double>(actual - estimated)) / static_cast<double>(estimated);
}

Reconciliation reconcile_counts(long estimated, long attempts, long completed, double threshold) {
  Reconciliation r;
  r.estimated_calls = estimated;
  r.actual_attempts = attempts;
  r.actual_completed = completed;
  r.deviation_attempts = deviation(estimated, attempts);
  r.deviation_completed = deviation(estimated, completed);
  r.flagged = r.deviation_completed > threshold;
  return r;
}

}  // namespace

CostParams CostParams::from_search_config(const SearchConfig& config, long validation_size) {
  CostParams p;
  p.steps = config.total_steps;
  p.rounds = config.ucb.rounds;
  p.sample_size = config.ucb.sample_size;
  p.candidates = config.candidates_per_step;
  p.validation_size = validation_size;
  // One parent feeds the first step; every later step expands the survivors.
  p.screening_prompts.clear();
  p.total_search = 0;
  for (int s = 1; s <= config.total_steps; ++s) {
    long arms = (s == 1 ? 1L : static_cast<long>(config.candidates_per_step)) *
                config.expansion_per_parent;
    p.screening_prompts.push_back(arms);
    p.total_search += arms;
  }
  return p;
}

CostEstimate estimate_cost(const CostParams& params) {
  CostEstimate e;
  e.generation_calls = static_cast<long>(params.calls_per_prompt) * params.total_search;
  for (long arms : params.screening_prompts) {
    e.screening_calls += arms * params.rounds * params.sample_size;
  }
  e.evaluation_calls =
      static_cast<long>(params.steps) * params.candidates * params.validation_size;
  e.total_calls = e.generation_calls + e.screening_calls + e.evaluation_calls;

  e.generation_tokens = static_cast<double>(e.generation_calls) * params.tokens_per_generation;
  e.screening_tokens = static_cast<double>(e.screening_calls) * params.tokens_per_example_eval;
  e.evaluation_tokens = static_cast<double>(e.evaluation_calls) * params.tokens_per_example_eval;
  e.total_tokens = e.generation_tokens + e.screening_tokens + e.evaluation_tokens;
  return e;
}

Reconciliation reconcile(const CostEstimate& estimate, const StageCounters& counters,
                         double threshold) {
  long attempts =
      counters.generation.calls + counters.screening.calls + counters.evaluation.calls;
  long completed = counters.generation.completed + counters.screening.completed +
                   counters.evaluation.completed;
  return reconcile_counts(estimate.total_calls, attempts, completed, threshold);
}

Reconciliation reconcile(const CostEstimate& estimate, const UsageLedger& ledger,
                         double threshold) {
  return reconcile_counts(estimate.total_calls, ledger.api_calls(), ledger.completed_calls(),
                          threshold);
}

CalibrationResult calibrate_rates(Gateway& gateway, const TemplateRegistry& templates,
                                  const Dataset& dataset, const AnswerRule& rule,
                                  const SearchConfig& config, const std::string& initial_prompt,
                                  const std::filesystem::path& scratch_dir) {
  SearchConfig pilot = config;
  pilot.total_steps = 1;

  RunStore store(scratch_dir);
  if (store.has_manifest()) {
    throw ConfigError("calibration scratch directory already holds a run: " +
                      scratch_dir.string());
  }
  SearchEngine engine(gateway, templates, dataset, rule, pilot, store);
  engine.run(initial_prompt);

  const StageCounters& c = engine.counters();
  CalibrationResult result;
  result.pilot_generation_calls = c.generation.completed;
  result.pilot_eval_calls = c.screening.completed + c.evaluation.completed + c.test.completed;
  if (result.pilot_generation_calls > 0) {
    result.tokens_per_generation = static_cast<double>(c.generation.tokens) /
                                   static_cast<double>(result.pilot_generation_calls);
  }
  if (result.pilot_eval_calls > 0) {
    result.tokens_per_example_eval =
        static_cast<double>(c.screening.tokens + c.evaluation.tokens + c.test.tokens) /
        static_cast<double>(result.pilot_eval_calls);
  }
  return result;
}

}  // namespace promptopt

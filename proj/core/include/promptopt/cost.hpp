#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "promptopt/search.hpp"

namespace promptopt {

// Planning model for what a run will spend. Generation traffic is priced with
// a flat per-candidate constant; screening is priced at the full round budget
// even though halving usually stops early, so the estimate reads as a ceiling
// there.
struct CostParams {
  int calls_per_prompt = 14;
  long total_search = 310;
  std::vector<long> screening_prompts;  // arms entering the bandit, per step
  int rounds = 5;
  int sample_size = 20;
  int candidates = 5;  // full evaluations per step
  long validation_size = 0;
  int steps = 7;
  double tokens_per_generation = 0.0;
  double tokens_per_example_eval = 0.0;

  static CostParams from_search_config(const SearchConfig& config, long validation_size);
};

struct CostEstimate {
  long generation_calls = 0;
  long screening_calls = 0;
  long evaluation_calls = 0;
  long total_calls = 0;
  double generation_tokens = 0.0;
  double screening_tokens = 0.0;
  double evaluation_tokens = 0.0;
  double total_tokens = 0.0;
};

CostEstimate estimate_cost(const CostParams& params);

// Estimate against what a finished (or aborted) run actually spent. The
// completed-call deviation decides the flag; attempt counts are carried
// alongside since retries inflate them outside the model's scope.
struct Reconciliation {
  long estimated_calls = 0;
  long actual_attempts = 0;
  long actual_completed = 0;
  double deviation_attempts = 0.0;
  double deviation_completed = 0.0;
  bool flagged = false;
};

Reconciliation reconcile(const CostEstimate& estimate, const StageCounters& counters,
                         double threshold = 0.25);
Reconciliation reconcile(const CostEstimate& estimate, const UsageLedger& ledger,
                         double threshold = 0.25);

// Measured per-call token rates from a one-step pilot run executed in
// `scratch_dir` (which must not already hold a run).
struct CalibrationResult {
  double tokens_per_generation = 0.0;
  double tokens_per_example_eval = 0.0;
  long pilot_generation_calls = 0;
  long pilot_eval_calls = 0;
};

CalibrationResult calibrate_rates(Gateway& gateway, const TemplateRegistry& templates,
                                  const Dataset& dataset, const AnswerRule& rule,
                                  const SearchConfig& config, const std::string& initial_prompt,
                                  const std::filesystem::path& scratch_dir);

}  // namespace promptopt

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "promptopt/analyzer.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/optimizer.hpp"
#include "promptopt/refiner.hpp"
#include "promptopt/run_store.hpp"
#include "promptopt/tasks.hpp"
#include "promptopt/templates.hpp"

namespace promptopt {

struct UcbConfig {
  int sample_size = 20;  // validation examples drawn per screening round
  int rounds = 5;        // halving rounds before a forced final cut
  double exploration = 1.4142135623730951;
};

struct SearchConfig {
  int k = 3;             // cases sampled from each partition
  int m = 3;             // experiences requested per case
  int n_strategies = 3;  // strategies generated per experience
  int expansion_per_parent = 10;
  int candidates_per_step = 5;
  int total_steps = 7;
  int cache_capacity = 5;
  int top_results = 5;
  UcbConfig ucb;
  std::uint64_t seed = 0;
  std::string validation_split = "validation";
  std::string test_split = "test";

  void validate() const;
  // Canonical dump compared on resume to refuse continuing under different
  // settings.
  std::string snapshot_text() const;
};

struct StageTally {
  long calls = 0;      // attempts, including retries
  long completed = 0;  // successful completions
  long tokens = 0;

  StageTally& operator+=(const StageTally& o);
};

struct StageCounters {
  StageTally generation;  // experience, strategy, judge and rewrite traffic
  StageTally screening;   // sampled evaluations inside the bandit
  StageTally evaluation;  // full validation-split evaluations
  StageTally test;        // test-split evaluations
};

struct StrategyRecord {
  std::string experience_id;
  int index = 0;  // position within the experience's batch
  std::string text;
  double aggregate = 0.0;
  bool selected = false;
};

struct ExpansionLog {
  std::vector<Experience> experiences;
  std::vector<StrategyRecord> strategies;
  std::vector<std::string> warnings;
  int shortfall = 0;  // child slots that stayed empty after one retry
};

struct ExpansionResult {
  std::vector<PromptCandidate> children;
  ExpansionLog log;
};

struct ScreeningOutcome {
  std::vector<std::size_t> survivors;  // arm indices, creation order
  long example_calls = 0;
  int rounds_run = 0;
};

struct RankedPrompt {
  std::string id;
  std::string text;
  double validation = 0.0;
  std::optional<double> test;
};

struct RunResult {
  RankedPrompt initial;
  std::vector<RankedPrompt> top;  // generated candidates, validation desc
  StageCounters counters;
  int steps_completed = 0;
  std::size_t generated = 0;
  int shortfalls = 0;
  bool finalized = false;
};

// One optimization run: evaluate, partition, reflect, rewrite, screen with a
// bandit, validate survivors, repeat; every random draw comes from a substream
// named by (seed, purpose, step, index) so reruns and resumes agree bytewise.
class SearchEngine {
 public:
  SearchEngine(Gateway& gateway, const TemplateRegistry& templates, const Dataset& dataset,
               const AnswerRule& rule, const SearchConfig& config, RunStore& store);

  // abort_after_step > 0 stops cleanly after committing that step, leaving a
  // resumable directory behind.
  RunResult run(const std::string& initial_prompt, bool resume = false, int abort_after_step = -1);

  // Pieces exposed for direct testing.
  ExpansionResult expand(const PromptCandidate& parent, const EvaluationReport& report, int step,
                         int parent_index, const std::function<std::string()>& next_id,
                         const PromptCache& cache);
  ScreeningOutcome screen_ucb(const std::vector<std::string>& arm_texts, int step);

  const StageCounters& counters() const { return counters_; }

 private:
  struct ParentState {
    std::string id;
    std::string text;
    double validation = 0.0;
  };
  struct Incumbent {
    std::string id;
    std::string text;
    double validation = -1.0;
    double test = 0.0;
  };

  StageTally ledger_delta(const UsageLedger& before) const;
  double test_score(const std::string& id, const std::string& text);
  void purge_unaccounted_reports() const;
  void restore_state(const nlohmann::json& state);
  nlohmann::json state_json(int completed_step) const;
  RunResult finalize();

  Gateway& gateway_;
  const TemplateRegistry& templates_;
  const Dataset& dataset_;
  SearchConfig config_;
  RunStore& store_;
  Evaluator evaluator_;
  DemoLibrary demos_;

  // Mutable run state, checkpointed after every step.
  std::vector<ParentState> parents_;
  Incumbent incumbent_;
  PromptCache cache_;
  RankedPrompt initial_;
  std::vector<ParentState> evaluated_;  // every fully evaluated candidate
  StageCounters counters_;
  std::size_t next_ordinal_ = 1;
  int shortfalls_ = 0;
};

}  // namespace promptopt

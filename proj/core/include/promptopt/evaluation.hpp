#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/gateway.hpp"
#include "promptopt/tasks.hpp"

namespace promptopt {

struct Verdict {
  std::string example_id;
  std::optional<std::string> predicted;  // nullopt = no parseable answer
  bool correct = false;
};

struct EvaluationReport {
  std::string prompt_id;
  std::string prompt_hash;  // hash of (prompt text, split), the cache key
  std::string split;
  std::vector<Verdict> verdicts;
  double accuracy = 0.0;
  std::vector<std::string> correct_ids;
  std::vector<std::string> incorrect_ids;
};

struct DriftMetrics {
  std::optional<double> acr;  // undefined when nothing was correct before
  std::optional<double> bcr;  // undefined when nothing was incorrect before
  long adverse_count = 0;
  long beneficial_count = 0;
  long pre_correct = 0;
  long pre_incorrect = 0;
};

// Counts prediction flips between two reports over the identical example set.
// Undefined denominators stay undefined rather than collapsing to zero.
DriftMetrics correction_rates(const EvaluationReport& pre, const EvaluationReport& post);

std::string report_cache_key(const std::string& prompt_text, const std::string& split);

// Persistence hook for full-split reports; implemented by the run store.
class ReportStore {
 public:
  virtual ~ReportStore() = default;
  virtual std::optional<EvaluationReport> load_report(const std::string& key) const = 0;
  virtual void save_report(const EvaluationReport& report) const = 0;
};

// Scores prompts over dataset splits via the evaluator backend. Full-split
// reports are cached in memory and optionally on disk, keyed by prompt text
// and split, so re-evaluating an identical prompt issues no backend calls.
class Evaluator {
 public:
  Evaluator(Gateway& gateway, const Dataset& dataset, AnswerRule rule,
            ReportStore* store = nullptr, int parallelism = 8);

  EvaluationReport evaluate_prompt(const std::string& prompt_id, const std::string& prompt_text,
                                   const std::string& split);

  // Screening path: evaluates on an explicit id sample, bypassing the cache.
  // Returns per-example correctness aligned with `ids`.
  std::vector<bool> evaluate_on_ids(const std::string& prompt_text,
                                    const std::vector<std::string>& ids);

  const Dataset& dataset() const { return dataset_; }
  const AnswerRule& rule() const { return rule_; }

 private:
  Verdict score_example(const std::string& prompt_text, const LabeledExample& example);

  Gateway& gateway_;
  const Dataset& dataset_;
  AnswerRule rule_;
  ReportStore* store_;
  int parallelism_;
  std::mutex cache_mutex_;
  std::map<std::string, EvaluationReport> cache_;
};

}  // namespace promptopt

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promptopt/analyzer.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/templates.hpp"

namespace promptopt {

// Few-shot demonstrations spliced into the strategy-generation meta-prompt.
// One demonstration is embedded in the template body itself; the library
// supplies the rest so the error families covered can grow without touching
// the template.
class DemoLibrary {
 public:
  static DemoLibrary builtin();

  const std::string& id() const { return id_; }
  std::size_t size() const { return demos_.size(); }

  // Rendered value for the extra-demos slot: full <demo> blocks separated by
  // blank lines.
  std::string additional_demos() const;

 private:
  std::string id_;
  std::vector<std::string> demos_;
};

struct Strategy {
  std::string text;
  std::string experience_id;
  std::string demo_set_id;
};

struct Rating {
  double m = 0.0;  // match with experience
  double c = 0.0;  // clarity
  double e = 0.0;  // effectiveness
};

struct ScoreSheet {
  std::vector<Rating> ratings;
  double aggregate = 0.0;
  bool clamped = false;
};

// Grand mean over every dimension of every rating.
double aggregate_ratings(const std::vector<Rating>& ratings);

// Parses a judge completion into exactly `raters` ratings. Accepts the
// requested bracket format with either quote style, completions that resume
// after the "[{" stub the meta-prompt ends with, and as a last resort any
// text containing labelled M/C/E numbers. Values outside [0,100] are clamped
// and flagged. Throws Error when no usable sheet can be recovered.
ScoreSheet parse_score_sheet(const std::string& raw, std::size_t raters = 5);

// Highest aggregate wins; ties go to the earliest strategy. Invariant under
// positive affine rescaling of the aggregates.
std::size_t select_strategy_index(const std::vector<double>& aggregates);

struct StrategyBatch {
  std::vector<Strategy> strategies;
  int calls = 0;
};

// n independent generation calls for one experience. A completion that wraps
// the strategy in <strategy> tags is unwrapped; otherwise the trimmed text is
// taken whole.
StrategyBatch formulate_strategies(Gateway& gateway, const TemplateRegistry& templates,
                                   const DemoLibrary& demos, const std::string& prompt,
                                   const std::string& case_triple, const Experience& experience,
                                   int n);

struct JudgeResult {
  ScoreSheet sheet;
  int calls = 0;
};

// One judge call scoring one strategy against its experience; a malformed
// sheet is re-requested once before giving up.
JudgeResult judge_strategy(Gateway& gateway, const TemplateRegistry& templates,
                           const Experience& experience, const Strategy& strategy);

}  // namespace promptopt

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptopt/analyzer.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/refiner.hpp"
#include "promptopt/templates.hpp"

namespace promptopt {

enum class Origin { initial, optimized_positive, optimized_negative, hybrid, paraphrase };
const char* origin_name(Origin o);

struct PromptCandidate {
  std::string id;
  std::string text;
  Origin origin = Origin::initial;
  std::vector<std::string> parent_ids;
  int iteration = 0;
  std::optional<double> validation_score;
};

// Ranked list of the best prompt texts seen so far, rendered into the
// paraphrase meta-prompt so rewrites are conditioned on what already works.
// Kept sorted by score descending; equal scores keep insertion order; a
// duplicate text keeps its best score.
class PromptCache {
 public:
  explicit PromptCache(std::size_t capacity) : capacity_(capacity) {}

  void update(const std::string& text, double score);
  std::string render() const;
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<std::pair<std::string, double>> entries_;
};

// Peels decoration models wrap replies in: whitespace, one code fence, one
// layer of matching quotes.
std::string strip_surrounding_markup(const std::string& text);

// Interior of the first <tag>...</tag> region (first matching close, so
// nested same-name tags stay intact), trimmed. Empty optional when the pair
// is absent.
std::optional<std::string> extract_tag(const std::string& text, const std::string& tag);

struct OpResult {
  std::string text;
  int calls = 0;
};

// One rewrite of `prompt` guided by an experience and its selected strategy.
OpResult optimize_prompt(Gateway& gateway, const TemplateRegistry& templates,
                         const std::string& prompt, const std::string& case_triple,
                         const Experience& experience, const Strategy& strategy);

// Merges the strengths of two prompts; the reply must carry the instruction
// in XML tags and is re-requested once when it does not.
OpResult crossover_prompts(Gateway& gateway, const TemplateRegistry& templates,
                           const std::string& examples, const std::string& prompt1,
                           const std::string& prompt2);

// Rewrites `prompt` conditioned on the ranked cache.
OpResult paraphrase_prompt(Gateway& gateway, const TemplateRegistry& templates,
                           const PromptCache& cache, const std::string& prompt);

}  // namespace promptopt

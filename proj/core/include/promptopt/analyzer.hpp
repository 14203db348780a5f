#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "promptopt/evaluation.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/templates.hpp"

namespace promptopt {

enum class Polarity { positive, negative };
const char* polarity_name(Polarity p);

struct Experience {
  std::string id;
  Polarity polarity = Polarity::positive;
  std::string text;
  std::vector<std::string> source_example_ids;
  std::string source_prompt_id;
};

struct CaseRecord {
  LabeledExample example;
  Verdict verdict;
};

// "question: ...\nactual answer: ...\nreference answer: ..." for the
// {{examples}} / {{example}} slots of the meta-prompts.
std::string render_case_triple(const CaseRecord& c);

// Seeded uniform sampling without replacement from each partition of the
// report; partitions smaller than k are taken whole.
std::pair<std::vector<CaseRecord>, std::vector<CaseRecord>> sample_cases(
    const EvaluationReport& report, const Dataset& dataset, int k, std::uint64_t seed);

// Splits a completion into numbered (or bulleted) list items.
std::vector<std::string> parse_numbered_list(const std::string& text);

struct DeriveResult {
  std::vector<Experience> experiences;
  int calls = 0;
  std::vector<std::string> warnings;
};

// One collect call per case; each call asks for m experiences. A count
// mismatch triggers one re-prompt; afterwards extra items are truncated and a
// short list proceeds with what came back, recorded as a warning.
DeriveResult derive_experiences(Gateway& gateway, const TemplateRegistry& templates,
                                const std::string& prompt, const std::vector<CaseRecord>& cases,
                                Polarity polarity, int m, const std::string& source_prompt_id,
                                const std::string& id_prefix);

}  // namespace promptopt

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/util.hpp"

namespace promptopt {

struct LabeledExample {
  std::string id;
  std::string input;
  std::string gold;
  std::vector<std::string> options;  // option texts; keys are A, B, C, ... by position
};

struct Dataset {
  std::string name;
  std::vector<LabeledExample> examples;
  // Split name -> ordered example ids. Splits are disjoint.
  std::map<std::string, std::vector<std::string>> splits;

  const LabeledExample& by_id(const std::string& id) const;
  const std::vector<std::string>& split(const std::string& name) const;
  bool has_example(const std::string& id) const;

  std::map<std::string, std::size_t> index_;  // id -> position, built on load
  void rebuild_index();
};

enum class AnswerKind { option_letter, exact_match, pattern };

struct AnswerRule {
  AnswerKind kind = AnswerKind::option_letter;
  bool case_fold = true;
  bool strip_punct = false;
  std::string pattern;  // regex with optional capture group, kind == pattern
};

// JSONL records {"id","input","gold","options"?}. A sibling <stem>.splits.json
// file ({"train":[ids],...}) declares splits; without one the whole file
// becomes a single "all" split.
Dataset load_dataset(const std::filesystem::path& path, const std::string& format = "jsonl");
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Question text with the rendered options block when present.
std::string render_question(const LabeledExample& example);

// Q_END placement: question first, the prompt appended after a newline.
std::string assemble_query(const std::string& prompt, const LabeledExample& example);

std::string normalize_text(const std::string& text, const AnswerRule& rule);

// Returns the extracted label, or nullopt when no answer is found. Unparseable
// output is scored incorrect by callers, never excluded. `options` supplies
// the valid letter keys for option-letter extraction (A.. per option count);
// null or empty means any capital letter counts.
std::optional<std::string> extract_answer(const std::string& raw, const AnswerRule& rule,
                                          const std::vector<std::string>* options = nullptr);

bool is_correct(const std::optional<std::string>& predicted, const LabeledExample& example,
                const AnswerRule& rule);

}  // namespace promptopt

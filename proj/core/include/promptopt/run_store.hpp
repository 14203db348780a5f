#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "promptopt/evaluation.hpp"
#include "promptopt/tasks.hpp"

namespace promptopt {

// Stable identity of the data a run was started against; resuming with a
// different dataset is refused.
std::string dataset_fingerprint(const Dataset& dataset);

// Round-trip form used for cached reports and CLI report files. Loading
// rebuilds accuracy and the id partitions from the verdicts.
nlohmann::json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

struct RunManifest {
  std::string engine_version;
  std::string created_utc;
  std::string dataset_fingerprint;
  std::uint64_t seed = 0;
  std::string initial_prompt_hash;
  std::string validation_split;
  std::string test_split;
};

// Owns the on-disk layout of one optimization run:
//
//   manifest.json      run identity, written once at creation
//   config.snapshot    canonical config dump, compared on resume
//   candidates.jsonl   one line per generated candidate, appended per step
//   trace.csv          anytime-performance curve
//   state.json         resume checkpoint, atomically replaced after each step
//   result.json        final summary
//   evals/             cached full-split evaluation reports
//   iter<N>/           per-step logs (experiences.jsonl, strategies.jsonl)
//
// Appends land before the checkpoint that accounts for them, so a crash can
// only leave surplus lines; resume truncates both line files back to the
// counts the checkpoint recorded. Not thread-safe; the search drives it from
// one thread.
class RunStore : public ReportStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  bool has_manifest() const;
  void write_manifest(const RunManifest& manifest);
  RunManifest read_manifest() const;

  void write_config_snapshot(const std::string& text);
  std::optional<std::string> read_config_snapshot() const;

  void append_candidates(const std::vector<nlohmann::json>& rows);
  std::size_t candidate_row_count() const;
  void truncate_candidates(std::size_t rows);

  void ensure_trace_header();
  void append_trace_rows(const std::vector<std::string>& rows);
  std::size_t trace_row_count() const;  // data rows, header excluded
  void truncate_trace(std::size_t rows);

  void save_state(const nlohmann::json& state);
  std::optional<nlohmann::json> load_state() const;

  void save_result(const nlohmann::json& result);

  // Recreates iter<step>/ empty and returns it.
  std::filesystem::path begin_iter(int step);
  void append_jsonl(const std::filesystem::path& file, const nlohmann::json& row);

  // ReportStore: full-split evaluation cache under evals/.
  std::optional<EvaluationReport> load_report(const std::string& key) const override;
  void save_report(const EvaluationReport& report) const override;

 private:
  std::filesystem::path dir_;
};

}  // namespace promptopt

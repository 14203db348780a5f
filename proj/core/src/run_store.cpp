#include "promptopt/run_store.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "promptopt/util.hpp"

namespace promptopt {
namespace {

using nlohmann::json;

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Complete (newline-terminated) lines of a possibly-absent file; a trailing
// partial line from an interrupted append is dropped.
std::vector<std::string> complete_lines(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) return {};
  std::vector<std::string> lines = split_lines(read_file(file));
  lines.pop_back();
  return lines;
}

void rewrite_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
  std::string text = lines.empty() ? std::string() : join(lines, "\n") + "\n";
  atomic_write_file(file, text);
}

void append_line(const std::filesystem::path& file, const std::string& line) {
  std::ofstream out(file, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to " + file.string());
  out << line << '\n';
  if (!out) throw DataError("write failed for " + file.string());
}

const char kTraceHeader[] = "search_size,best_validation,best_test";

}  // namespace

json report_to_json(const EvaluationReport& r) {
  json verdicts = json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back({{"id", v.example_id},
                        {"predicted", v.predicted ? json(*v.predicted) : json(nullptr)},
                        {"correct", v.correct}});
  }
  return {{"prompt_id", r.prompt_id},
          {"prompt_hash", r.prompt_hash},
          {"split", r.split},
          {"accuracy", r.accuracy},
          {"verdicts", verdicts}};
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.prompt_hash = j.at("prompt_hash").get<std::string>();
  r.split = j.at("split").get<std::string>();
  for (const auto& vj : j.at("verdicts")) {
    Verdict v;
    v.example_id = vj.at("id").get<std::string>();
    if (!vj.at("predicted").is_null()) v.predicted = vj.at("predicted").get<std::string>();
    v.correct = vj.at("correct").get<bool>();
    (v.correct ? r.correct_ids : r.incorrect_ids).push_back(v.example_id);
    r.verdicts.push_back(std::move(v));
  }
  r.accuracy = r.verdicts.empty()
                   ? 0.0
                   : static_cast<double>(r.correct_ids.size()) / r.verdicts.size();
  return r;
}

std::string dataset_fingerprint(const Dataset& dataset) {
  std::uint64_t h = fnv1a64(dataset.name);
  for (const auto& ex : dataset.examples) {
    h = fnv1a64(ex.id, h);
    h = fnv1a64(ex.input, h);
    h = fnv1a64(ex.gold, h);
    for (const auto& option : ex.options) h = fnv1a64(option, h);
  }
  for (const auto& [split, ids] : dataset.splits) {
    h = fnv1a64(split, h);
    for (const auto& id : ids) h = fnv1a64(id, h);
  }
  return hex64(h);
}

RunStore::RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "evals");
}

bool RunStore::has_manifest() const {
  return std::filesystem::exists(dir_ / "manifest.json");
}

void RunStore::write_manifest(const RunManifest& m) {
  json j = {{"engine_version", m.engine_version},
            {"created_utc", m.created_utc},
            {"dataset_fingerprint", m.dataset_fingerprint},
            {"seed", m.seed},
            {"initial_prompt_hash", m.initial_prompt_hash},
            {"validation_split", m.validation_split},
            {"test_split", m.test_split}};
  atomic_write_file(dir_ / "manifest.json", j.dump(2) + "\n");
}

RunManifest RunStore::read_manifest() const {
  const auto file = dir_ / "manifest.json";
  if (!std::filesystem::exists(file)) throw DataError("no manifest in " + dir_.string());
  json j = json::parse(read_file(file));
  RunManifest m;
  m.engine_version = j.at("engine_version").get<std::string>();
  m.created_utc = j.at("created_utc").get<std::string>();
  m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.initial_prompt_hash = j.at("initial_prompt_hash").get<std::string>();
  m.validation_split = j.at("validation_split").get<std::string>();
  m.test_split = j.at("test_split").get<std::string>();
  return m;
}

void RunStore::write_config_snapshot(const std::string& text) {
  atomic_write_file(dir_ / "config.snapshot", text);
}

std::optional<std::string> RunStore::read_config_snapshot() const {
  const auto file = dir_ / "config.snapshot";
  if (!std::filesystem::exists(file)) return std::nullopt;
  return read_file(file);
}

void RunStore::append_candidates(const std::vector<json>& rows) {
  for (const auto& row : rows) append_line(dir_ / "candidates.jsonl", row.dump());
}

std::size_t RunStore::candidate_row_count() const {
  return complete_lines(dir_ / "candidates.jsonl").size();
}

void RunStore::truncate_candidates(std::size_t rows) {
  auto lines = complete_lines(dir_ / "candidates.jsonl");
  if (lines.size() < rows) {
    throw DataError("candidates.jsonl holds " + std::to_string(lines.size()) +
                    " rows, checkpoint expects " + std::to_string(rows));
  }
  lines.resize(rows);
  rewrite_lines(dir_ / "candidates.jsonl", lines);
}

void RunStore::ensure_trace_header() {
  const auto file = dir_ / "trace.csv";
  if (!std::filesystem::exists(file)) append_line(file, kTraceHeader);
}

void RunStore::append_trace_rows(const std::vector<std::string>& rows) {
  ensure_trace_header();
  for (const auto& row : rows) append_line(dir_ / "trace.csv", row);
}

std::size_t RunStore::trace_row_count() const {
  auto lines = complete_lines(dir_ / "trace.csv");
  return lines.empty() ? 0 : lines.size() - 1;
}

void RunStore::truncate_trace(std::size_t rows) {
  auto lines = complete_lines(dir_ / "trace.csv");
  if (lines.empty()) lines.push_back(kTraceHeader);
  if (lines.size() - 1 < rows) {
    throw DataError("trace.csv holds " + std::to_string(lines.size() - 1) +
                    " rows, checkpoint expects " + std::to_string(rows));
  }
  lines.resize(rows + 1);
  rewrite_lines(dir_ / "trace.csv", lines);
}

void RunStore::save_state(const json& state) {
  atomic_write_file(dir_ / "state.json", state.dump(2) + "\n");
}

std::optional<json> RunStore::load_state() const {
  const auto file = dir_ / "state.json";
  if (!std::filesystem::exists(file)) return std::nullopt;
  json j = json::parse(read_file(file), nullptr, false);
  if (j.is_discarded()) throw DataError("run checkpoint is corrupt: " + file.string());
  return j;
}

void RunStore::save_result(const json& result) {
  atomic_write_file(dir_ / "result.json", result.dump(2) + "\n");
}

std::filesystem::path RunStore::begin_iter(int step) {
  auto p = dir_ / ("iter" + std::to_string(step));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void RunStore::append_jsonl(const std::filesystem::path& file, const json& row) {
  append_line(file, row.dump());
}

std::optional<EvaluationReport> RunStore::load_report(const std::string& key) const {
  const auto file = dir_ / "evals" / (key + ".json");
  if (!std::filesystem::exists(file)) return std::nullopt;
  json j = json::parse(read_file(file), nullptr, false);
  // Reports are replaced atomically, so a bad file means outside interference;
  // dropping it just costs a re-evaluation.
  if (j.is_discarded()) return std::nullopt;
  return report_from_json(j);
}

void RunStore::save_report(const EvaluationReport& report) const {
  atomic_write_file(dir_ / "evals" / (report.prompt_hash + ".json"), report_to_json(report).dump());
}

}  // namespace promptopt

#include "promptopt/evaluation.hpp"

#include <algorithm>

namespace promptopt {

std::string report_cache_key(const std::string& prompt_text, const std::string& split) {
  return content_hash(prompt_text + "\x1f" + split);
}

DriftMetrics correction_rates(const EvaluationReport& pre, const EvaluationReport& post) {
  if (pre.verdicts.size() != post.verdicts.size()) {
    throw DataError("correction_rates: reports cover different example counts");
  }
  std::map<std::string, bool> post_by_id;
  for (const auto& v : post.verdicts) post_by_id[v.example_id] = v.correct;

  DriftMetrics out;
  for (const auto& v : pre.verdicts) {
    auto it = post_by_id.find(v.example_id);
    if (it == post_by_id.end()) {
      throw DataError("correction_rates: example '" + v.example_id + "' missing from post report");
    }
    if (v.correct) {
      ++out.pre_correct;
      if (!it->second) ++out.adverse_count;
    } else {
      ++out.pre_incorrect;
      if (it->second) ++out.beneficial_count;
    }
  }
  if (post_by_id.size() != pre.verdicts.size()) {
    throw DataError("correction_rates: duplicate or extra example ids in post report");
  }
  if (out.pre_correct > 0) {
    out.acr = static_cast<double>(out.adverse_count) / static_cast<double>(out.pre_correct);
  }
  if (out.pre_incorrect > 0) {
    out.bcr = static_cast<double>(out.beneficial_count) / static_cast<double>(out.pre_incorrect);
  }
  return out;
}

Evaluator::Evaluator(Gateway& gateway, const Dataset& dataset, AnswerRule rule, ReportStore* store,
                     int parallelism)
    : gateway_(gateway),
      dataset_(dataset),
      rule_(std::move(rule)),
      store_(store),
      parallelism_(parallelism) {}

Verdict Evaluator::score_example(const std::string& prompt_text, const LabeledExample& example) {
  ChatRequest req = make_user_request(gateway_.model_for(Role::evaluator),
                                      assemble_query(prompt_text, example));
  Completion completion = gateway_.complete(req, Role::evaluator);
  Verdict v;
  v.example_id = example.id;
  v.predicted = extract_answer(completion.content, rule_, &example.options);
  v.correct = is_correct(v.predicted, example, rule_);
  return v;
}

EvaluationReport Evaluator::evaluate_prompt(const std::string& prompt_id,
                                            const std::string& prompt_text,
                                            const std::string& split) {
  const std::string key = report_cache_key(prompt_text, split);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      EvaluationReport copy = it->second;
      copy.prompt_id = prompt_id;
      return copy;
    }
  }
  if (store_) {
    if (auto loaded = store_->load_report(key)) {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      cache_[key] = *loaded;
      loaded->prompt_id = prompt_id;
      return *loaded;
    }
  }

  const std::vector<std::string>& ids = dataset_.split(split);
  if (ids.empty()) throw DataError("split '" + split + "' is empty");

  EvaluationReport report;
  report.prompt_id = prompt_id;
  report.prompt_hash = key;
  report.split = split;
  report.verdicts.resize(ids.size());
  // Any worker failure aborts the whole report; partial reports never escape.
  parallel_for(ids.size(), std::min(parallelism_, gateway_.max_in_flight()), [&](std::size_t i) {
    report.verdicts[i] = score_example(prompt_text, dataset_.by_id(ids[i]));
  });

  long correct = 0;
  for (const auto& v : report.verdicts) {
    if (v.correct) {
      ++correct;
      report.correct_ids.push_back(v.example_id);
    } else {
      report.incorrect_ids.push_back(v.example_id);
    }
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(ids.size());

  if (store_) store_->save_report(report);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_[key] = report;
  }
  return report;
}

std::vector<bool> Evaluator::evaluate_on_ids(const std::string& prompt_text,
                                             const std::vector<std::string>& ids) {
  // vector<bool> is bit-packed and unsafe for concurrent writes; stage bytes.
  std::vector<unsigned char> staged(ids.size(), 0);
  parallel_for(ids.size(), std::min(parallelism_, gateway_.max_in_flight()), [&](std::size_t i) {
    staged[i] = score_example(prompt_text, dataset_.by_id(ids[i])).correct ? 1 : 0;
  });
  return std::vector<bool>(staged.begin(), staged.end());
}

}  // namespace promptopt

#include "promptopt/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptopt/rng.hpp"
#include "promptopt/util.hpp"

namespace promptopt {
namespace {

using nlohmann::json;

std::string format_id(std::size_t ordinal) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "c%04zu", ordinal);
  return buf;
}

std::size_t ordinal_of(const std::string& candidate_id) {
  return static_cast<std::size_t>(std::stoul(candidate_id.substr(1)));
}

std::string trace_row(std::size_t search_size, double best_validation, double best_test) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f", search_size, best_validation, best_test);
  return buf;
}

}  // namespace

void SearchConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(k >= 1, "search.k must be at least 1");
  require(m >= 1, "search.m must be at least 1");
  require(n_strategies >= 1, "search.n_strategies must be at least 1");
  require(expansion_per_parent >= 4, "search.expansion_per_parent must be at least 4");
  require(expansion_per_parent % 2 == 0, "search.expansion_per_parent must be even");
  require(candidates_per_step >= 1, "search.candidates_per_step must be at least 1");
  require(total_steps >= 1, "search.total_steps must be at least 1");
  require(cache_capacity >= 1, "search.cache_capacity must be at least 1");
  require(top_results >= 1, "search.top_results must be at least 1");
  require(ucb.sample_size >= 1, "search.ucb.sample_size must be at least 1");
  require(ucb.rounds >= 1, "search.ucb.rounds must be at least 1");
  require(ucb.exploration >= 0.0, "search.ucb.exploration must be non-negative");
  require(!validation_split.empty(), "search.validation_split must be set");
  require(!test_split.empty(), "search.test_split must be set");
}

std::string SearchConfig::snapshot_text() const {
  char exploration_repr[40];
  std::snprintf(exploration_repr, sizeof(exploration_repr), "%.17g", ucb.exploration);
  std::string out;
  out += "search.k = " + std::to_string(k) + "\n";
  out += "search.m = " + std::to_string(m) + "\n";
  out += "search.n_strategies = " + std::to_string(n_strategies) + "\n";
  out += "search.expansion_per_parent = " + std::to_string(expansion_per_parent) + "\n";
  out += "search.candidates_per_step = " + std::to_string(candidates_per_step) + "\n";
  out += "search.total_steps = " + std::to_string(total_steps) + "\n";
  out += "search.cache_capacity = " + std::to_string(cache_capacity) + "\n";
  out += "search.top_results = " + std::to_string(top_results) + "\n";
  out += "search.ucb.sample_size = " + std::to_string(ucb.sample_size) + "\n";
  out += "search.ucb.rounds = " + std::to_string(ucb.rounds) + "\n";
  out += "search.ucb.exploration = " + std::string(exploration_repr) + "\n";
  out += "search.validation_split = " + validation_split + "\n";
  out += "search.test_split = " + test_split + "\n";
  out += "seed = " + std::to_string(seed) + "\n";
  return out;
}

StageTally& StageTally::operator+=(const StageTally& o) {
  calls += o.calls;
  completed += o.completed;
  tokens += o.tokens;
  return *this;
}

SearchEngine::SearchEngine(Gateway& gateway, const TemplateRegistry& templates,
                           const Dataset& dataset, const AnswerRule& rule,
                           const SearchConfig& config, RunStore& store)
    : gateway_(gateway),
      templates_(templates),
      dataset_(dataset),
      config_(config),
      store_(store),
      evaluator_(gateway, dataset, rule, &store),
      demos_(DemoLibrary::builtin()),
      cache_(static_cast<std::size_t>(std::max(config.cache_capacity, 1))) {
  config_.validate();
}

StageTally SearchEngine::ledger_delta(const UsageLedger& before) const {
  UsageLedger after = gateway_.snapshot_usage();
  StageTally t;
  for (Role r : {Role::optimizer, Role::evaluator, Role::judge}) {
    const RoleUsage& a = after.role(r);
    const RoleUsage& b = before.role(r);
    t.calls += a.api_calls - b.api_calls;
    t.completed += a.completed_calls - b.completed_calls;
    t.tokens += a.total_tokens - b.total_tokens;
  }
  return t;
}

double SearchEngine::test_score(const std::string& id, const std::string& text) {
  UsageLedger led = gateway_.snapshot_usage();
  EvaluationReport rep = evaluator_.evaluate_prompt(id, text, config_.test_split);
  counters_.test += ledger_delta(led);
  return rep.accuracy;
}

ExpansionResult SearchEngine::expand(const PromptCandidate& parent,
                                     const EvaluationReport& report, int step, int parent_index,
                                     const std::function<std::string()>& next_id,
                                     const PromptCache& cache) {
  ExpansionResult out;
  const std::uint64_t sample_seed = derive_seed(config_.seed, "sample", step, parent_index);
  auto [correct_cases, incorrect_cases] = sample_cases(report, dataset_, config_.k, sample_seed);

  std::unordered_map<std::string, std::string> triple_by_example;
  std::vector<std::string> all_triples;
  for (const auto* cases : {&correct_cases, &incorrect_cases}) {
    for (const auto& c : *cases) {
      std::string triple = render_case_triple(c);
      triple_by_example[c.example.id] = triple;
      all_triples.push_back(std::move(triple));
    }
  }

  const std::string prefix = "s" + std::to_string(step) + ".p" + std::to_string(parent_index);
  DeriveResult positive, negative;
  if (!correct_cases.empty()) {
    positive = derive_experiences(gateway_, templates_, parent.text, correct_cases,
                                  Polarity::positive, config_.m, parent.id, prefix + ".pos");
  }
  if (!incorrect_cases.empty()) {
    negative = derive_experiences(gateway_, templates_, parent.text, incorrect_cases,
                                  Polarity::negative, config_.m, parent.id, prefix + ".neg");
  }
  for (auto* derived : {&positive, &negative}) {
    for (auto& w : derived->warnings) out.log.warnings.push_back(std::move(w));
    for (const auto& e : derived->experiences) out.log.experiences.push_back(e);
  }

  // Judge-ranked (experience, best strategy) pool per polarity; an experience
  // whose strategies cannot be generated or scored drops out with a warning.
  struct Scored {
    const Experience* experience;
    Strategy strategy;
    double aggregate;
  };
  auto build_pool = [&](const std::vector<Experience>& experiences) {
    std::vector<Scored> pool;
    for (const auto& e : experiences) {
      try {
        StrategyBatch batch =
            formulate_strategies(gateway_, templates_, demos_, parent.text,
                                 triple_by_example.at(e.source_example_ids.front()), e,
                                 config_.n_strategies);
        std::vector<double> aggregates;
        for (const auto& s : batch.strategies) {
          aggregates.push_back(judge_strategy(gateway_, templates_, e, s).sheet.aggregate);
        }
        std::size_t best = select_strategy_index(aggregates);
        for (std::size_t i = 0; i < batch.strategies.size(); ++i) {
          out.log.strategies.push_back({e.id, static_cast<int>(i), batch.strategies[i].text,
                                        aggregates[i], i == best});
        }
        pool.push_back({&e, batch.strategies[best], aggregates[best]});
      } catch (const ConfigError&) {
        throw;
      } catch (const TemplateError&) {
        throw;
      } catch (const Error& err) {
        out.log.warnings.push_back("experience " + e.id + " dropped: " + err.what());
      }
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Scored& a, const Scored& b) { return a.aggregate > b.aggregate; });
    return pool;
  };
  auto positive_pool = build_pool(positive.experiences);
  auto negative_pool = build_pool(negative.experiences);

  // One retry per child slot, then the slot is given up and counted.
  auto attempt = [&](const char* what, auto&& op) -> std::optional<std::string> {
    for (int a = 0; a < 2; ++a) {
      try {
        std::string text = op();
        if (!text.empty()) return text;
        out.log.warnings.push_back(std::string(what) + ": empty rewrite");
      } catch (const ConfigError&) {
        throw;
      } catch (const TemplateError&) {
        throw;
      } catch (const Error& err) {
        out.log.warnings.push_back(std::string(what) + ": " + err.what());
      }
    }
    ++out.log.shortfall;
    return std::nullopt;
  };

  const int quota = (config_.expansion_per_parent - 2) / 2;
  auto rewrite_children = [&](const std::vector<Scored>& pool, Origin origin) {
    std::vector<PromptCandidate> kids;
    const int slots = std::min<int>(quota, static_cast<int>(pool.size()));
    if (slots < quota) {
      out.log.warnings.push_back(std::string(origin_name(origin)) + ": only " +
                                 std::to_string(slots) + " of " + std::to_string(quota) +
                                 " slots had material");
      out.log.shortfall += quota - slots;
    }
    for (int i = 0; i < slots; ++i) {
      const Scored& sc = pool[static_cast<std::size_t>(i)];
      auto text = attempt("optimize", [&] {
        return optimize_prompt(gateway_, templates_, parent.text,
                               triple_by_example.at(sc.experience->source_example_ids.front()),
                               *sc.experience, sc.strategy)
            .text;
      });
      if (!text) continue;
      PromptCandidate kid;
      kid.id = next_id();
      kid.text = std::move(*text);
      kid.origin = origin;
      kid.parent_ids = {parent.id};
      kid.iteration = step;
      kids.push_back(std::move(kid));
    }
    return kids;
  };
  auto positive_children = rewrite_children(positive_pool, Origin::optimized_positive);
  auto negative_children = rewrite_children(negative_pool, Origin::optimized_negative);

  std::optional<PromptCandidate> hybrid;
  if (!positive_children.empty() && !negative_children.empty()) {
    auto text = attempt("crossover", [&] {
      return crossover_prompts(gateway_, templates_, join(all_triples, "\n\n"),
                               positive_children.front().text, negative_children.front().text)
          .text;
    });
    if (text) {
      PromptCandidate kid;
      kid.id = next_id();
      kid.text = std::move(*text);
      kid.origin = Origin::hybrid;
      kid.parent_ids = {positive_children.front().id, negative_children.front().id};
      kid.iteration = step;
      hybrid = std::move(kid);
    }
  } else {
    ++out.log.shortfall;
    out.log.warnings.push_back("crossover: needs a child of each polarity");
  }

  // Paraphrase whatever the best product of this expansion is; with nothing
  // produced it rewrites the parent itself.
  const std::string* para_text = &parent.text;
  const std::string* para_parent = &parent.id;
  if (hybrid) {
    para_text = &hybrid->text;
    para_parent = &hybrid->id;
  } else if (!positive_children.empty()) {
    para_text = &positive_children.front().text;
    para_parent = &positive_children.front().id;
  } else if (!negative_children.empty()) {
    para_text = &negative_children.front().text;
    para_parent = &negative_children.front().id;
  }
  std::optional<PromptCandidate> paraphrase;
  if (auto text = attempt("paraphrase",
                          [&] { return paraphrase_prompt(gateway_, templates_, cache, *para_text).text; })) {
    PromptCandidate kid;
    kid.id = next_id();
    kid.text = std::move(*text);
    kid.origin = Origin::paraphrase;
    kid.parent_ids = {*para_parent};
    kid.iteration = step;
    paraphrase = std::move(kid);
  }

  for (auto& kid : positive_children) out.children.push_back(std::move(kid));
  for (auto& kid : negative_children) out.children.push_back(std::move(kid));
  if (hybrid) out.children.push_back(std::move(*hybrid));
  if (paraphrase) out.children.push_back(std::move(*paraphrase));
  return out;
}

ScreeningOutcome SearchEngine::screen_ucb(const std::vector<std::string>& arm_texts, int step) {
  ScreeningOutcome out;
  const auto C = static_cast<std::size_t>(config_.candidates_per_step);
  const std::size_t n = arm_texts.size();
  std::vector<std::size_t> alive(n);
  std::iota(alive.begin(), alive.end(), 0);
  if (n <= C) {
    out.survivors = alive;
    return out;
  }

  const std::vector<std::string>& split_ids = dataset_.split(config_.validation_split);
  std::vector<long> pulls(n, 0);
  std::vector<long> wins(n, 0);
  std::vector<double> index(n, 0.0);
  long t_total = 0;

  auto cut_to = [&](std::size_t keep) {
    std::stable_sort(alive.begin(), alive.end(),
                     [&](std::size_t a, std::size_t b) { return index[a] > index[b]; });
    alive.resize(keep);
    std::sort(alive.begin(), alive.end());
  };

  for (int r = 0; r < config_.ucb.rounds && alive.size() > C; ++r) {
    // Fresh shared sample per round: every surviving arm sees the same ids.
    SubRng rng(derive_seed(config_.seed, "screen", step, r));
    std::vector<std::string> ids;
    for (std::size_t idx : sample_without_replacement(
             rng, split_ids.size(),
             std::min<std::size_t>(static_cast<std::size_t>(config_.ucb.sample_size),
                                   split_ids.size()))) {
      ids.push_back(split_ids[idx]);
    }
    const long drawn = static_cast<long>(ids.size());
    for (std::size_t arm : alive) {
      std::vector<bool> correct = evaluator_.evaluate_on_ids(arm_texts[arm], ids);
      wins[arm] += std::count(correct.begin(), correct.end(), true);
      pulls[arm] += drawn;
      t_total += drawn;
      out.example_calls += drawn;
    }
    for (std::size_t arm : alive) {
      index[arm] =
          static_cast<double>(wins[arm]) / static_cast<double>(pulls[arm]) +
          config_.ucb.exploration *
              std::sqrt(std::log(static_cast<double>(t_total)) / static_cast<double>(pulls[arm]));
    }
    cut_to(std::max(C, (alive.size() + 1) / 2));
    ++out.rounds_run;
  }
  if (alive.size() > C) cut_to(C);
  out.survivors = alive;
  return out;
}

void SearchEngine::purge_unaccounted_reports() const {
  std::unordered_set<std::string> keep;
  auto add = [&](const std::string& text) {
    keep.insert(report_cache_key(text, config_.validation_split));
    keep.insert(report_cache_key(text, config_.test_split));
  };
  if (!initial_.text.empty()) add(initial_.text);
  for (const auto& e : evaluated_) add(e.text);

  const auto evals = store_.dir() / "evals";
  if (!std::filesystem::exists(evals)) return;
  for (const auto& entry : std::filesystem::directory_iterator(evals)) {
    if (!entry.is_regular_file()) continue;
    if (!keep.count(entry.path().stem().string())) std::filesystem::remove(entry.path());
  }
}

nlohmann::json SearchEngine::state_json(int completed_step) const {
  json parents = json::array();
  for (const auto& p : parents_) {
    parents.push_back({{"id", p.id}, {"text", p.text}, {"validation", p.validation}});
  }
  json cache = json::array();
  for (const auto& [text, score] : cache_.entries()) {
    cache.push_back({{"text", text}, {"score", score}});
  }
  json evaluated = json::array();
  for (const auto& e : evaluated_) {
    evaluated.push_back({{"id", e.id}, {"text", e.text}, {"validation", e.validation}});
  }
  auto tally = [](const StageTally& t) {
    return json{{"calls", t.calls}, {"completed", t.completed}, {"tokens", t.tokens}};
  };
  return json{
      {"completed_step", completed_step},
      {"next_ordinal", next_ordinal_},
      {"candidate_rows", store_.candidate_row_count()},
      {"trace_rows", store_.trace_row_count()},
      {"shortfalls", shortfalls_},
      {"parents", parents},
      {"incumbent",
       {{"id", incumbent_.id},
        {"text", incumbent_.text},
        {"validation", incumbent_.validation},
        {"test", incumbent_.test}}},
      {"cache", cache},
      {"initial",
       {{"id", initial_.id},
        {"text", initial_.text},
        {"validation", initial_.validation},
        {"test", initial_.test ? json(*initial_.test) : json(nullptr)}}},
      {"evaluated", evaluated},
      {"counters",
       {{"generation", tally(counters_.generation)},
        {"screening", tally(counters_.screening)},
        {"evaluation", tally(counters_.evaluation)},
        {"test", tally(counters_.test)}}},
  };
}

void SearchEngine::restore_state(const nlohmann::json& state) {
  parents_.clear();
  for (const auto& p : state.at("parents")) {
    parents_.push_back({p.at("id").get<std::string>(), p.at("text").get<std::string>(),
                        p.at("validation").get<double>()});
  }
  const auto& inc = state.at("incumbent");
  incumbent_ = {inc.at("id").get<std::string>(), inc.at("text").get<std::string>(),
                inc.at("validation").get<double>(), inc.at("test").get<double>()};
  cache_ = PromptCache(static_cast<std::size_t>(config_.cache_capacity));
  for (const auto& c : state.at("cache")) {
    cache_.update(c.at("text").get<std::string>(), c.at("score").get<double>());
  }
  const auto& init = state.at("initial");
  initial_.id = init.at("id").get<std::string>();
  initial_.text = init.at("text").get<std::string>();
  initial_.validation = init.at("validation").get<double>();
  if (!init.at("test").is_null()) initial_.test = init.at("test").get<double>();
  evaluated_.clear();
  for (const auto& e : state.at("evaluated")) {
    evaluated_.push_back({e.at("id").get<std::string>(), e.at("text").get<std::string>(),
                          e.at("validation").get<double>()});
  }
  auto tally = [](const json& j) {
    StageTally t;
    t.calls = j.at("calls").get<long>();
    t.completed = j.at("completed").get<long>();
    t.tokens = j.at("tokens").get<long>();
    return t;
  };
  const auto& counters = state.at("counters");
  counters_.generation = tally(counters.at("generation"));
  counters_.screening = tally(counters.at("screening"));
  counters_.evaluation = tally(counters.at("evaluation"));
  counters_.test = tally(counters.at("test"));
  next_ordinal_ = state.at("next_ordinal").get<std::size_t>();
  shortfalls_ = state.at("shortfalls").get<int>();
}

RunResult SearchEngine::run(const std::string& initial_prompt, bool resume, int abort_after_step) {
  config_.validate();
  dataset_.split(config_.validation_split);
  dataset_.split(config_.test_split);

  int completed_step = -1;
  if (resume) {
    if (!store_.has_manifest()) {
      throw ConfigError("nothing to resume in " + store_.dir().string());
    }
    RunManifest m = store_.read_manifest();
    if (m.dataset_fingerprint != dataset_fingerprint(dataset_)) {
      throw ConfigError("resume refused: dataset differs from the one the run started with");
    }
    if (m.seed != config_.seed) throw ConfigError("resume refused: seed changed");
    if (m.initial_prompt_hash != content_hash(initial_prompt)) {
      throw ConfigError("resume refused: initial prompt changed");
    }
    if (m.validation_split != config_.validation_split || m.test_split != config_.test_split) {
      throw ConfigError("resume refused: split assignment changed");
    }
    if (auto snap = store_.read_config_snapshot(); snap && *snap != config_.snapshot_text()) {
      throw ConfigError("resume refused: configuration changed since the run started");
    }
    if (auto state = store_.load_state()) {
      restore_state(*state);
      completed_step = state->at("completed_step").get<int>();
      store_.truncate_candidates(state->at("candidate_rows").get<std::size_t>());
      store_.truncate_trace(state->at("trace_rows").get<std::size_t>());
      purge_unaccounted_reports();
    } else {
      // Crashed before the first checkpoint: nothing is committed, start over
      // inside the existing directory.
      purge_unaccounted_reports();
    }
  } else {
    if (store_.has_manifest()) {
      throw ConfigError(store_.dir().string() +
                        " already holds a run; resume it or choose a fresh directory");
    }
    RunManifest m;
    m.engine_version = kEngineVersion;
    m.created_utc = now_iso8601_utc();
    m.dataset_fingerprint = dataset_fingerprint(dataset_);
    m.seed = config_.seed;
    m.initial_prompt_hash = content_hash(initial_prompt);
    m.validation_split = config_.validation_split;
    m.test_split = config_.test_split;
    store_.write_manifest(m);
    store_.write_config_snapshot(config_.snapshot_text());
  }

  if (completed_step < 0) {
    store_.truncate_candidates(0);
    store_.truncate_trace(0);
    UsageLedger led = gateway_.snapshot_usage();
    EvaluationReport rep =
        evaluator_.evaluate_prompt("init", initial_prompt, config_.validation_split);
    counters_.evaluation += ledger_delta(led);
    initial_ = {"init", initial_prompt, rep.accuracy, std::nullopt};
    initial_.test = test_score("init", initial_prompt);
    incumbent_ = {"init", initial_prompt, rep.accuracy, *initial_.test};
    parents_ = {{"init", initial_prompt, rep.accuracy}};
    cache_.update(initial_prompt, rep.accuracy);
    store_.append_trace_rows({trace_row(0, initial_.validation, *initial_.test)});
    store_.save_state(state_json(0));
    completed_step = 0;
  }

  for (int step = completed_step + 1; step <= config_.total_steps; ++step) {
    const auto iter_dir = store_.begin_iter(step);

    UsageLedger led_gen = gateway_.snapshot_usage();
    std::vector<PromptCandidate> children;
    std::vector<std::string> warnings;
    for (std::size_t pi = 0; pi < parents_.size(); ++pi) {
      const ParentState& p = parents_[pi];
      EvaluationReport rep = evaluator_.evaluate_prompt(p.id, p.text, config_.validation_split);
      PromptCandidate as_candidate;
      as_candidate.id = p.id;
      as_candidate.text = p.text;
      as_candidate.validation_score = p.validation;
      ExpansionResult er =
          expand(as_candidate, rep, step, static_cast<int>(pi),
                 [this] { return format_id(next_ordinal_++); }, cache_);
      shortfalls_ += er.log.shortfall;
      for (const auto& e : er.log.experiences) {
        store_.append_jsonl(iter_dir / "experiences.jsonl",
                            {{"id", e.id},
                             {"polarity", polarity_name(e.polarity)},
                             {"source_example", e.source_example_ids.front()},
                             {"prompt_id", e.source_prompt_id},
                             {"text", e.text}});
      }
      for (const auto& s : er.log.strategies) {
        store_.append_jsonl(iter_dir / "strategies.jsonl",
                            {{"experience_id", s.experience_id},
                             {"index", s.index},
                             {"aggregate", s.aggregate},
                             {"selected", s.selected},
                             {"text", s.text}});
      }
      for (const auto& w : er.log.warnings) warnings.push_back(w);
      for (auto& kid : er.children) children.push_back(std::move(kid));
    }
    counters_.generation += ledger_delta(led_gen);
    if (!warnings.empty()) {
      write_file(iter_dir / "warnings.txt", join(warnings, "\n") + "\n");
    }
    if (children.empty()) {
      throw Error("step " + std::to_string(step) + " produced no candidates");
    }

    UsageLedger led_screen = gateway_.snapshot_usage();
    std::vector<std::string> texts;
    texts.reserve(children.size());
    for (const auto& kid : children) texts.push_back(kid.text);
    ScreeningOutcome screened = screen_ucb(texts, step);
    counters_.screening += ledger_delta(led_screen);

    UsageLedger led_eval = gateway_.snapshot_usage();
    for (std::size_t idx : screened.survivors) {
      PromptCandidate& kid = children[idx];
      EvaluationReport rep = evaluator_.evaluate_prompt(kid.id, kid.text, config_.validation_split);
      kid.validation_score = rep.accuracy;
    }
    counters_.evaluation += ledger_delta(led_eval);

    std::vector<std::string> trace_rows;
    for (std::size_t idx : screened.survivors) {
      PromptCandidate& kid = children[idx];
      cache_.update(kid.text, *kid.validation_score);
      evaluated_.push_back({kid.id, kid.text, *kid.validation_score});
      if (*kid.validation_score > incumbent_.validation) {
        double t = test_score(kid.id, kid.text);
        incumbent_ = {kid.id, kid.text, *kid.validation_score, t};
      }
      trace_rows.push_back(trace_row(ordinal_of(kid.id), incumbent_.validation, incumbent_.test));
    }

    std::vector<ParentState> next_parents;
    for (std::size_t idx : screened.survivors) {
      next_parents.push_back({children[idx].id, children[idx].text,
                              *children[idx].validation_score});
    }
    std::stable_sort(next_parents.begin(), next_parents.end(),
                     [](const ParentState& a, const ParentState& b) {
                       return a.validation > b.validation;
                     });
    parents_ = std::move(next_parents);

    std::vector<json> rows;
    rows.reserve(children.size());
    for (const auto& kid : children) {
      rows.push_back({{"id", kid.id},
                      {"iteration", kid.iteration},
                      {"origin", origin_name(kid.origin)},
                      {"parents", kid.parent_ids},
                      {"hash", content_hash(kid.text)},
                      {"text", kid.text},
                      {"validation", kid.validation_score ? json(*kid.validation_score)
                                                          : json(nullptr)}});
    }
    store_.append_candidates(rows);
    store_.append_trace_rows(trace_rows);
    store_.save_state(state_json(step));

    if (step == abort_after_step) {
      RunResult rr;
      rr.initial = initial_;
      rr.counters = counters_;
      rr.steps_completed = step;
      rr.generated = next_ordinal_ - 1;
      rr.shortfalls = shortfalls_;
      rr.finalized = false;
      return rr;
    }
  }

  return finalize();
}

RunResult SearchEngine::finalize() {
  // Equal scores keep evaluation order, so converged runs still return a full
  // ranking; duplicate texts stay under their own candidate ids.
  std::vector<ParentState> pool = evaluated_;
  std::stable_sort(pool.begin(), pool.end(), [](const ParentState& a, const ParentState& b) {
    return a.validation > b.validation;
  });
  if (pool.size() > static_cast<std::size_t>(config_.top_results)) {
    pool.resize(static_cast<std::size_t>(config_.top_results));
  }

  RunResult rr;
  rr.initial = initial_;
  for (const auto& e : pool) {
    RankedPrompt rp{e.id, e.text, e.validation, std::nullopt};
    rp.test = test_score(e.id, e.text);
    rr.top.push_back(std::move(rp));
  }
  rr.counters = counters_;
  rr.steps_completed = config_.total_steps;
  rr.generated = store_.candidate_row_count();
  rr.shortfalls = shortfalls_;
  rr.finalized = true;

  auto ranked = [](const RankedPrompt& p) {
    return json{{"id", p.id},
                {"text", p.text},
                {"validation", p.validation},
                {"test", p.test ? json(*p.test) : json(nullptr)}};
  };
  auto tally = [](const StageTally& t) {
    return json{{"calls", t.calls}, {"completed", t.completed}, {"tokens", t.tokens}};
  };
  json top = json::array();
  for (const auto& p : rr.top) top.push_back(ranked(p));
  store_.save_result(json{
      {"engine_version", kEngineVersion},
      {"seed", config_.seed},
      {"steps", config_.total_steps},
      {"generated", rr.generated},
      {"shortfalls", rr.shortfalls},
      {"initial", ranked(rr.initial)},
      {"best", rr.top.empty() ? json(nullptr) : ranked(rr.top.front())},
      {"top", top},
      {"counters",
       {{"generation", tally(counters_.generation)},
        {"screening", tally(counters_.screening)},
        {"evaluation", tally(counters_.evaluation)},
        {"test", tally(counters_.test)}}},
  });
  return rr;
}

}  // namespace promptopt

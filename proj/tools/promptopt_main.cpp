#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "promptopt/config.hpp"
#include "promptopt/cost.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/run_store.hpp"
#include "promptopt/search.hpp"
#include "promptopt/tasks.hpp"
#include "promptopt/templates.hpp"
#include "promptopt/util.hpp"

namespace {

using nlohmann::json;
using namespace promptopt;

// "@path" pulls the prompt from a file; surrounding whitespace is trimmed so
// a trailing newline in the file does not leak into every query.
std::string prompt_argument(const std::string& arg) {
  if (!arg.empty() && arg[0] == '@') return trim(read_file(arg.substr(1)));
  return arg;
}

TemplateRegistry make_templates(const AppConfig& config) {
  if (config.templates_dir.empty()) return TemplateRegistry::builtin();
  std::filesystem::path dir(config.templates_dir);
  if (!dir.is_absolute()) dir = config.base_dir / dir;
  return TemplateRegistry::from_directory(dir);
}

json ranked_json(const RankedPrompt& p) {
  return {{"id", p.id},
          {"text", p.text},
          {"validation", p.validation},
          {"test", p.test ? json(*p.test) : json(nullptr)}};
}

void write_or_print(const std::string& out_path, const json& payload) {
  std::string text = payload.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
}

int run_optimize(const AppConfig& config, const std::string& profile, const std::string& dataset_path,
                 const std::string& prompt_arg, const std::string& run_dir, bool resume,
                 int abort_after_step) {
  Dataset dataset = load_dataset(dataset_path);
  TemplateRegistry templates = make_templates(config);
  auto gateway = build_gateway(config, profile);
  RunStore store(run_dir);
  SearchEngine engine(*gateway, templates, dataset, config.rule, config.search, store);

  RunResult result = engine.run(prompt_argument(prompt_arg), resume, abort_after_step);
  if (!result.finalized) {
    std::cout << "stopped after step " << result.steps_completed << "; rerun with --resume to continue\n";
    return 0;
  }
  std::cout << "generated " << result.generated << " candidates over " << result.steps_completed
            << " steps";
  if (result.shortfalls > 0) std::cout << " (" << result.shortfalls << " slots unfilled)";
  std::cout << "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "initial  validation=%.6f test=%.6f", result.initial.validation,
                result.initial.test.value_or(0.0));
  std::cout << line << "\n";
  if (!result.top.empty()) {
    const RankedPrompt& best = result.top.front();
    std::snprintf(line, sizeof(line), "best %s validation=%.6f test=%.6f", best.id.c_str(),
                  best.validation, best.test.value_or(0.0));
    std::cout << line << "\n";
    std::cout << "best prompt:\n" << best.text << "\n";
  }
  std::cout << "artifacts in " << run_dir << "\n";
  return 0;
}

int run_evaluate(const AppConfig& config, const std::string& profile,
                 const std::string& dataset_path, const std::string& prompt_arg,
                 const std::string& split, const std::string& out_path) {
  Dataset dataset = load_dataset(dataset_path);
  auto gateway = build_gateway(config, profile);
  Evaluator evaluator(*gateway, dataset, config.rule, nullptr, config.max_in_flight);
  EvaluationReport report = evaluator.evaluate_prompt("prompt", prompt_argument(prompt_arg), split);
  char line[128];
  std::snprintf(line, sizeof(line), "accuracy %.6f (%zu/%zu) on split '%s'", report.accuracy,
                report.correct_ids.size(), report.verdicts.size(), split.c_str());
  std::cout << line << "\n";
  if (!out_path.empty()) write_file(out_path, report_to_json(report).dump(2) + "\n");
  return 0;
}

int run_compare(const std::string& pre_path, const std::string& post_path,
                const std::string& out_path) {
  EvaluationReport pre = report_from_json(json::parse(read_file(pre_path)));
  EvaluationReport post = report_from_json(json::parse(read_file(post_path)));
  DriftMetrics drift = correction_rates(pre, post);
  json payload = {
      {"pre_accuracy", pre.accuracy},
      {"post_accuracy", post.accuracy},
      {"pre_correct", drift.pre_correct},
      {"pre_incorrect", drift.pre_incorrect},
      {"adverse_count", drift.adverse_count},
      {"beneficial_count", drift.beneficial_count},
      {"acr", drift.acr ? json(*drift.acr) : json(nullptr)},
      {"bcr", drift.bcr ? json(*drift.bcr) : json(nullptr)},
      {"acr_percent", drift.acr ? json(*drift.acr * 100.0) : json(nullptr)},
      {"bcr_percent", drift.bcr ? json(*drift.bcr * 100.0) : json(nullptr)},
  };
  write_or_print(out_path, payload);
  return 0;
}

int run_cost_estimate(AppConfig config, const std::string& profile,
                      const std::string& dataset_path, int steps_override, bool calibrate,
                      const std::string& prompt_arg, std::string scratch_dir,
                      const std::string& out_path) {
  Dataset dataset = load_dataset(dataset_path);
  if (steps_override > 0) config.search.total_steps = steps_override;
  long validation_size =
      static_cast<long>(dataset.split(config.search.validation_split).size());
  CostParams params = CostParams::from_search_config(config.search, validation_size);

  json payload;
  if (calibrate) {
    if (prompt_arg.empty()) {
      throw ConfigError("--calibrate needs --initial-prompt for the pilot run");
    }
    TemplateRegistry templates = make_templates(config);
    auto gateway = build_gateway(config, profile);
    bool scratch_is_temp = scratch_dir.empty();
    if (scratch_is_temp) {
      auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
      scratch_dir = (std::filesystem::temp_directory_path() /
                     ("promptopt-pilot-" + std::to_string(stamp)))
                        .string();
    }
    CalibrationResult rates =
        calibrate_rates(*gateway, templates, dataset, config.rule, config.search,
                        prompt_argument(prompt_arg), scratch_dir);
    if (scratch_is_temp) std::filesystem::remove_all(scratch_dir);
    params.tokens_per_generation = rates.tokens_per_generation;
    params.tokens_per_example_eval = rates.tokens_per_example_eval;
    payload["rates"] = {{"tokens_per_generation", rates.tokens_per_generation},
                       {"tokens_per_example_eval", rates.tokens_per_example_eval},
                       {"pilot_generation_calls", rates.pilot_generation_calls},
                       {"pilot_eval_calls", rates.pilot_eval_calls}};
  }

  CostEstimate est = estimate_cost(params);
  payload["calls"] = {{"generation", est.generation_calls},
                      {"screening", est.screening_calls},
                      {"evaluation", est.evaluation_calls},
                      {"total", est.total_calls}};
  payload["tokens"] = {{"generation", est.generation_tokens},
                       {"screening", est.screening_tokens},
                       {"evaluation", est.evaluation_tokens},
                       {"total", est.total_tokens}};
  write_or_print(out_path, payload);
  return 0;
}

int run_report(const std::string& run_dir) {
  RunStore store(run_dir);
  RunManifest manifest = store.read_manifest();
  std::cout << "run " << run_dir << "\n";
  std::cout << "  created " << manifest.created_utc << ", seed " << manifest.seed << "\n";
  auto state = store.load_state();
  if (!state) {
    std::cout << "  no checkpoint yet\n";
    return 0;
  }
  std::cout << "  completed steps: " << state->at("completed_step").get<int>() << "\n";
  std::cout << "  candidates generated: " << state->at("candidate_rows").get<std::size_t>() << "\n";
  const auto& inc = state->at("incumbent");
  char line[160];
  std::snprintf(line, sizeof(line), "  best so far: %s validation=%.6f test=%.6f",
                inc.at("id").get<std::string>().c_str(), inc.at("validation").get<double>(),
                inc.at("test").get<double>());
  std::cout << line << "\n";
  const auto& counters = state->at("counters");
  for (const char* stage : {"generation", "screening", "evaluation", "test"}) {
    const auto& t = counters.at(stage);
    std::snprintf(line, sizeof(line), "  %-10s calls=%ld completed=%ld tokens=%ld", stage,
                  t.at("calls").get<long>(), t.at("completed").get<long>(),
                  t.at("tokens").get<long>());
    std::cout << line << "\n";
  }
  std::cout << "  best prompt:\n" << inc.at("text").get<std::string>() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reflective prompt optimization over chat-completion backends"};
  app.set_version_flag("--version", kEngineVersion);
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, profile;
  std::uint64_t seed_value = 0;
  CLI::Option* seed_opt = app.add_option("--seed", seed_value, "override the configured seed");
  app.add_option("--config", config_path, "configuration file");
  app.add_option("--backend-profile", profile, "backend profile to apply");

  auto* optimize = app.add_subcommand("optimize", "run the optimization loop");
  std::string opt_dataset, opt_prompt, opt_run_dir;
  bool opt_resume = false;
  int opt_abort_after = -1;
  optimize->add_option("--dataset", opt_dataset, "task dataset (jsonl)")->required();
  optimize->add_option("--initial-prompt", opt_prompt, "starting prompt text, or @file")->required();
  optimize->add_option("--run-dir", opt_run_dir, "artifact directory")->required();
  optimize->add_flag("--resume", opt_resume, "continue a checkpointed run");
  optimize->add_option("--abort-after-step", opt_abort_after,
                       "stop cleanly after this step (testing aid)");

  auto* evaluate = app.add_subcommand("evaluate", "score one prompt on a split");
  std::string ev_dataset, ev_prompt, ev_split = "validation", ev_out;
  evaluate->add_option("--dataset", ev_dataset, "task dataset (jsonl)")->required();
  evaluate->add_option("--prompt", ev_prompt, "prompt text, or @file")->required();
  evaluate->add_option("--split", ev_split, "split to score (default validation)");
  evaluate->add_option("--out", ev_out, "write the full report as JSON");

  auto* compare = app.add_subcommand("compare", "drift metrics between two evaluation reports");
  std::string cmp_pre, cmp_post, cmp_out;
  compare->add_option("--pre", cmp_pre, "report JSON before the change")->required();
  compare->add_option("--post", cmp_post, "report JSON after the change")->required();
  compare->add_option("--out", cmp_out, "write metrics as JSON (default stdout)");

  auto* cost = app.add_subcommand("cost-estimate", "predict a run's call and token budget");
  std::string cost_dataset, cost_prompt, cost_scratch, cost_out;
  int cost_steps = 0;
  bool cost_calibrate = false;
  cost->add_option("--dataset", cost_dataset, "task dataset (jsonl)")->required();
  cost->add_option("--steps", cost_steps, "override the configured step count");
  cost->add_flag("--calibrate", cost_calibrate, "measure token rates with a one-step pilot");
  cost->add_option("--initial-prompt", cost_prompt, "pilot prompt (with --calibrate)");
  cost->add_option("--scratch-dir", cost_scratch, "pilot run directory (default: temp, removed)");
  cost->add_option("--out", cost_out, "write the estimate as JSON (default stdout)");

  auto* report = app.add_subcommand("report", "summarize a run directory");
  std::string rep_run_dir;
  report->add_option("--run-dir", rep_run_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    AppConfig config;
    if (!config_path.empty()) config = load_config_file(config_path);
    if (*seed_opt) config.search.seed = seed_value;

    if (optimize->parsed()) {
      return run_optimize(config, profile, opt_dataset, opt_prompt, opt_run_dir, opt_resume,
                          opt_abort_after);
    }
    if (evaluate->parsed()) {
      return run_evaluate(config, profile, ev_dataset, ev_prompt, ev_split, ev_out);
    }
    if (compare->parsed()) return run_compare(cmp_pre, cmp_post, cmp_out);
    if (cost->parsed()) {
      return run_cost_estimate(config, profile, cost_dataset, cost_steps, cost_calibrate,
                               cost_prompt, cost_scratch, cost_out);
    }
    if (report->parsed()) return run_report(rep_run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TemplateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

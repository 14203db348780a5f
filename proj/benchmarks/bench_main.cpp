#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "promptopt/evaluation.hpp"
#include "promptopt/optimizer.hpp"
#include "promptopt/rng.hpp"
#include "promptopt/tasks.hpp"
#include "promptopt/templates.hpp"
#include "promptopt/util.hpp"

namespace {

using namespace promptopt;

EvaluationReport synthetic_report(const std::string& prompt_id, int n, std::uint64_t seed,
                                  double rate) {
  EvaluationReport r;
  r.prompt_id = prompt_id;
  r.split = "validation";
  for (int i = 0; i < n; ++i) {
    Verdict v;
    v.example_id = "ex-" + std::to_string(i);
    v.correct = hash_u01(prompt_id, v.example_id, std::to_string(seed)) < rate;
    (v.correct ? r.correct_ids : r.incorrect_ids).push_back(v.example_id);
    r.verdicts.push_back(std::move(v));
  }
  r.accuracy = static_cast<double>(r.correct_ids.size()) / n;
  return r;
}

void bm_render_template(benchmark::State& state) {
  TemplateRegistry registry = TemplateRegistry::builtin();
  const MetaTemplate& tpl = registry.get("optimize");
  std::string prompt(200, 'p');
  std::string example(400, 'e');
  for (auto _ : state) {
    benchmark::DoNotOptimize(render(tpl, {{"prompt", prompt},
                                          {"example", example},
                                          {"experience", "watch the option list"},
                                          {"strategy", "read, derive, verify"}}));
  }
}
BENCHMARK(bm_render_template);

void bm_extract_answer(benchmark::State& state) {
  AnswerRule rule;
  LabeledExample ex;
  ex.options = {"one", "two", "three", "four"};
  std::string raw =
      "Working through the options, (A) fails the first check and (C) contradicts the premise, "
      "so the answer is (B).";
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_answer(raw, rule, &ex.options));
  }
}
BENCHMARK(bm_extract_answer);

void bm_correction_rates_10k(benchmark::State& state) {
  EvaluationReport pre = synthetic_report("pre", 10000, 7, 0.6);
  EvaluationReport post = synthetic_report("pre", 10000, 7, 0.6);
  for (auto& v : post.verdicts) {
    if (hash_u01("flip", v.example_id, "1") < 0.1) v.correct = !v.correct;
  }
  post.correct_ids.clear();
  post.incorrect_ids.clear();
  for (const auto& v : post.verdicts) {
    (v.correct ? post.correct_ids : post.incorrect_ids).push_back(v.example_id);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(correction_rates(pre, post));
  }
}
BENCHMARK(bm_correction_rates_10k);

void bm_cache_update(benchmark::State& state) {
  std::vector<std::string> texts;
  for (int i = 0; i < 64; ++i) texts.push_back("candidate prompt " + std::to_string(i));
  std::size_t i = 0;
  PromptCache cache(5);
  for (auto _ : state) {
    cache.update(texts[i % texts.size()], hash_u01("s", texts[i % texts.size()], "0"));
    ++i;
  }
  benchmark::DoNotOptimize(cache.render());
}
BENCHMARK(bm_cache_update);

void bm_seeded_sample(benchmark::State& state) {
  for (auto _ : state) {
    SubRng rng(derive_seed(42, "screen", 3, state.iterations() & 7));
    benchmark::DoNotOptimize(sample_without_replacement(rng, 300, 20));
  }
}
BENCHMARK(bm_seeded_sample);

}  // namespace

BENCHMARK_MAIN();

#include "promptopt/refiner.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>

#include <nlohmann/json.hpp>

#include "promptopt/util.hpp"

namespace promptopt {
namespace {

std::optional<std::vector<Rating>> ratings_from_json(const std::string& text) {
  auto first = text.find('[');
  auto last = text.rfind(']');
  if (first == std::string::npos || last == std::string::npos || last <= first) return std::nullopt;
  std::string body = text.substr(first, last - first + 1);
  // The meta-prompt shows the format with Python-style single quotes and
  // models tend to echo it; rating records never contain apostrophes, so a
  // blanket swap is safe here.
  std::replace(body.begin(), body.end(), '\'', '"');
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_array()) return std::nullopt;

  std::vector<Rating> out;
  for (const auto& rec : j) {
    if (!rec.is_object()) return std::nullopt;
    auto dim = [&rec](const char* upper, const char* lower) -> std::optional<double> {
      if (rec.contains(upper) && rec[upper].is_number()) return rec[upper].get<double>();
      if (rec.contains(lower) && rec[lower].is_number()) return rec[lower].get<double>();
      return std::nullopt;
    };
    auto m = dim("M", "m"), c = dim("C", "c"), e = dim("E", "e");
    if (!m || !c || !e) return std::nullopt;
    out.push_back({*m, *c, *e});
  }
  return out;
}

std::optional<std::vector<Rating>> ratings_from_labels(const std::string& text) {
  static const std::regex label(R"(([MCEmce])\s*["']?\s*[:=]\s*(-?\d+(?:\.\d+)?))");
  std::vector<Rating> out;
  Rating current;
  bool have_m = false, have_c = false, have_e = false;
  auto flush = [&]() -> bool {
    if (!have_m && !have_c && !have_e) return true;
    if (!(have_m && have_c && have_e)) return false;
    out.push_back(current);
    current = Rating{};
    have_m = have_c = have_e = false;
    return true;
  };
  for (auto it = std::sregex_iterator(text.begin(), text.end(), label);
       it != std::sregex_iterator(); ++it) {
    char key = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
    double value = std::stod((*it)[2].str());
    bool* seen = key == 'M' ? &have_m : key == 'C' ? &have_c : &have_e;
    if (*seen && !flush()) return std::nullopt;
    *seen = true;
    (key == 'M' ? current.m : key == 'C' ? current.c : current.e) = value;
  }
  if (!flush()) return std::nullopt;
  if (out.empty()) return std::nullopt;
  return out;
}

std::string unwrap_strategy(const std::string& reply) {
  const std::string open = "<strategy>", close = "</strategy>";
  auto start = reply.rfind(open);
  if (start != std::string::npos) {
    auto end = reply.find(close, start + open.size());
    if (end != std::string::npos) {
      return trim(reply.substr(start + open.size(), end - start - open.size()));
    }
  }
  return trim(reply);
}

}  // namespace

double aggregate_ratings(const std::vector<Rating>& ratings) {
  if (ratings.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : ratings) sum += r.m + r.c + r.e;
  return sum / (3.0 * static_cast<double>(ratings.size()));
}

ScoreSheet parse_score_sheet(const std::string& raw, std::size_t raters) {
  auto ratings = ratings_from_json(raw);
  // The meta-prompt ends with an opening "[{" stub; some completions resume
  // from there and carry no bracket of their own.
  if (!ratings) ratings = ratings_from_json("[{" + raw);
  if (!ratings) ratings = ratings_from_labels(raw);
  if (!ratings) throw Error("judge reply contains no recognizable score sheet");
  if (ratings->size() != raters) {
    throw Error("judge reply contains " + std::to_string(ratings->size()) +
                " ratings, expected " + std::to_string(raters));
  }

  ScoreSheet sheet;
  sheet.ratings = std::move(*ratings);
  for (auto& r : sheet.ratings) {
    for (double* v : {&r.m, &r.c, &r.e}) {
      if (*v < 0.0 || *v > 100.0) {
        *v = std::clamp(*v, 0.0, 100.0);
        sheet.clamped = true;
      }
    }
  }
  sheet.aggregate = aggregate_ratings(sheet.ratings);
  return sheet;
}

std::size_t select_strategy_index(const std::vector<double>& aggregates) {
  if (aggregates.empty()) throw Error("no strategy scores to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < aggregates.size(); ++i) {
    if (aggregates[i] > aggregates[best]) best = i;
  }
  return best;
}

StrategyBatch formulate_strategies(Gateway& gateway, const TemplateRegistry& templates,
                                   const DemoLibrary& demos, const std::string& prompt,
                                   const std::string& case_triple, const Experience& experience,
                                   int n) {
  const MetaTemplate& tpl = templates.get("generate-strategy");
  std::string body = render(tpl, {{"additional_demos", demos.additional_demos()},
                                  {"prompt", prompt},
                                  {"example", case_triple},
                                  {"experience", experience.text}});
  StrategyBatch batch;
  for (int i = 0; i < n; ++i) {
    Completion reply = gateway.complete(
        make_user_request(gateway.model_for(Role::optimizer), body), Role::optimizer);
    ++batch.calls;
    batch.strategies.push_back({unwrap_strategy(reply.content), experience.id, demos.id()});
  }
  return batch;
}

JudgeResult judge_strategy(Gateway& gateway, const TemplateRegistry& templates,
                           const Experience& experience, const Strategy& strategy) {
  const MetaTemplate& tpl = templates.get("score");
  std::string body =
      render(tpl, {{"experience", experience.text}, {"strategy", strategy.text}});
  JudgeResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Completion reply =
        gateway.complete(make_user_request(gateway.model_for(Role::judge), body), Role::judge);
    ++result.calls;
    try {
      result.sheet = parse_score_sheet(reply.content);
      return result;
    } catch (const Error&) {
      if (attempt == 1) throw;
    }
  }
  return result;  // unreachable
}

}  // namespace promptopt

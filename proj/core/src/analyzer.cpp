#include "promptopt/analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "promptopt/rng.hpp"
#include "promptopt/util.hpp"

namespace promptopt {
namespace {

// List items may start "1." / "2)" / "3:" or with a dash/star bullet.
bool item_start(const std::string& line, std::string* rest) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')' || line[i] == ':')) {
    *rest = trim(line.substr(i + 1));
    return true;
  }
  if ((line[0] == '-' || line[0] == '*') && line.size() > 1 && line[1] == ' ') {
    *rest = trim(line.substr(2));
    return true;
  }
  return false;
}

}  // namespace

const char* polarity_name(Polarity p) {
  return p == Polarity::positive ? "positive" : "negative";
}

std::string render_case_triple(const CaseRecord& c) {
  std::string actual = c.verdict.predicted ? *c.verdict.predicted : std::string("(no answer)");
  return "question: " + render_question(c.example) + "\nactual answer: " + actual +
         "\nreference answer: " + c.example.gold;
}

std::pair<std::vector<CaseRecord>, std::vector<CaseRecord>> sample_cases(
    const EvaluationReport& report, const Dataset& dataset, int k, std::uint64_t seed) {
  std::unordered_map<std::string, const Verdict*> by_id;
  for (const auto& v : report.verdicts) by_id[v.example_id] = &v;

  auto pick = [&](const std::vector<std::string>& ids, std::string_view tag) {
    std::vector<CaseRecord> out;
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), ids.size());
    SubRng rng(derive_seed(seed, tag));
    for (std::size_t idx : sample_without_replacement(rng, ids.size(), take)) {
      const std::string& id = ids[idx];
      out.push_back({dataset.by_id(id), *by_id.at(id)});
    }
    return out;
  };
  return {pick(report.correct_ids, "correct"), pick(report.incorrect_ids, "incorrect")};
}

std::vector<std::string> parse_numbered_list(const std::string& text) {
  std::vector<std::string> items;
  bool in_item = false;
  for (const auto& raw : split_lines(text)) {
    std::string line = trim(raw);
    if (line.empty()) {
      in_item = false;
      continue;
    }
    std::string rest;
    if (item_start(line, &rest)) {
      items.push_back(rest);
      in_item = true;
    } else if (in_item) {
      // Wrapped continuation of the current item.
      if (!items.back().empty()) items.back() += ' ';
      items.back() += line;
    }
  }
  return items;
}

DeriveResult derive_experiences(Gateway& gateway, const TemplateRegistry& templates,
                                const std::string& prompt, const std::vector<CaseRecord>& cases,
                                Polarity polarity, int m, const std::string& source_prompt_id,
                                const std::string& id_prefix) {
  const MetaTemplate& tpl = templates.get(
      polarity == Polarity::positive ? "collect-positive" : "collect-negative");
  DeriveResult result;
  int sequence = 0;
  for (const auto& c : cases) {
    std::string body = render(tpl, {{"prompt", prompt},
                                    {"examples", render_case_triple(c)},
                                    {"num", std::to_string(m)}});
    std::vector<std::string> items;
    for (int attempt = 0; attempt < 2; ++attempt) {
      Completion reply = gateway.complete(
          make_user_request(gateway.model_for(Role::optimizer), body), Role::optimizer);
      ++result.calls;
      items = parse_numbered_list(reply.content);
      if (static_cast<int>(items.size()) == m) break;
    }
    if (items.empty()) {
      throw Error("experience collection for example '" + c.example.id +
                  "' returned no list items after retry");
    }
    if (static_cast<int>(items.size()) != m) {
      if (static_cast<int>(items.size()) > m) {
        items.resize(static_cast<std::size_t>(m));
        result.warnings.push_back("example '" + c.example.id + "': expected " + std::to_string(m) +
                                  " experiences, truncated surplus");
      } else {
        result.warnings.push_back("example '" + c.example.id + "': expected " + std::to_string(m) +
                                  " experiences, got " + std::to_string(items.size()));
      }
    }
    for (auto& text : items) {
      Experience e;
      e.id = id_prefix + ".e" + std::to_string(sequence++);
      e.polarity = polarity;
      e.text = std::move(text);
      e.source_example_ids = {c.example.id};
      e.source_prompt_id = source_prompt_id;
      result.experiences.push_back(std::move(e));
    }
  }
  return result;
}

}  // namespace promptopt

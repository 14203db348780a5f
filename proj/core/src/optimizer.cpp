#include "promptopt/optimizer.hpp"

#include <algorithm>
#include <cstdio>

#include "promptopt/util.hpp"

namespace promptopt {
namespace {

std::string strip_fence(const std::string& text) {
  if (text.size() < 6 || text.compare(0, 3, "```") != 0 ||
      text.compare(text.size() - 3, 3, "```") != 0) {
    return text;
  }
  auto first_newline = text.find('\n');
  if (first_newline == std::string::npos) return text;
  auto body_end = text.rfind("```");
  if (body_end <= first_newline) return text;
  return text.substr(first_newline + 1, body_end - first_newline - 1);
}

std::string strip_quotes(const std::string& text) {
  if (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') &&
      text.back() == text.front()) {
    return text.substr(1, text.size() - 2);
  }
  return text;
}

}  // namespace

const char* origin_name(Origin o) {
  switch (o) {
    case Origin::initial: return "initial";
    case Origin::optimized_positive: return "optimized_positive";
    case Origin::optimized_negative: return "optimized_negative";
    case Origin::hybrid: return "hybrid";
    case Origin::paraphrase: return "paraphrase";
  }
  return "initial";
}

void PromptCache::update(const std::string& text, double score) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const auto& e) { return e.first == text; });
  if (it != entries_.end()) {
    it->second = std::max(it->second, score);
  } else {
    entries_.emplace_back(text, score);
  }
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (entries_.size() > capacity_) entries_.resize(capacity_);
}

std::string PromptCache::render() const {
  if (entries_.empty()) return "(none yet)";
  std::vector<std::string> lines;
  lines.reserve(entries_.size());
  for (const auto& [text, score] : entries_) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", score);
    lines.push_back("score: " + std::string(buf) + " | instruction: " + text);
  }
  return join(lines, "\n");
}

std::string strip_surrounding_markup(const std::string& text) {
  std::string out = trim(text);
  out = trim(strip_fence(out));
  out = trim(strip_quotes(out));
  return out;
}

std::optional<std::string> extract_tag(const std::string& text, const std::string& tag) {
  const std::string open = "<" + tag + ">", close = "</" + tag + ">";
  auto start = text.find(open);
  if (start == std::string::npos) return std::nullopt;
  auto end = text.find(close, start + open.size());
  if (end == std::string::npos) return std::nullopt;
  return trim(text.substr(start + open.size(), end - start - open.size()));
}

OpResult optimize_prompt(Gateway& gateway, const TemplateRegistry& templates,
                         const std::string& prompt, const std::string& case_triple,
                         const Experience& experience, const Strategy& strategy) {
  std::string body = render(templates.get("optimize"), {{"prompt", prompt},
                                                        {"example", case_triple},
                                                        {"experience", experience.text},
                                                        {"strategy", strategy.text}});
  Completion reply = gateway.complete(
      make_user_request(gateway.model_for(Role::optimizer), body), Role::optimizer);
  return {strip_surrounding_markup(reply.content), 1};
}

OpResult crossover_prompts(Gateway& gateway, const TemplateRegistry& templates,
                           const std::string& examples, const std::string& prompt1,
                           const std::string& prompt2) {
  std::string body = render(templates.get("crossover"),
                            {{"examples", examples}, {"prompt1", prompt1}, {"prompt2", prompt2}});
  OpResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Completion reply = gateway.complete(
        make_user_request(gateway.model_for(Role::optimizer), body), Role::optimizer);
    ++result.calls;
    if (auto inner = extract_tag(reply.content, "instruction")) {
      result.text = strip_surrounding_markup(*inner);
      return result;
    }
  }
  throw Error("crossover reply carried no <instruction> block after retry");
}

OpResult paraphrase_prompt(Gateway& gateway, const TemplateRegistry& templates,
                           const PromptCache& cache, const std::string& prompt) {
  std::string body = render(templates.get("paraphrase"),
                            {{"instruction_score", cache.render()}, {"instruction", prompt}});
  Completion reply = gateway.complete(
      make_user_request(gateway.model_for(Role::optimizer), body), Role::optimizer);
  return {strip_surrounding_markup(reply.content), 1};
}

}  // namespace promptopt

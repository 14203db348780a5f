#include "promptopt/mock_backend.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"
#include "promptopt/util.hpp"

namespace promptopt {

namespace {

using json = nlohmann::json;

struct Marker {
  std::string keyword;  // empty for the [[answer:X]] form
  std::string gold;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Scans [[requires:<kw>;answer:<letter>]] and [[answer:<letter>]] markers.
std::vector<Marker> scan_markers(const std::string& text) {
  std::vector<Marker> out;
  std::size_t pos = 0;
  while ((pos = text.find("[[", pos)) != std::string::npos) {
    std::size_t close = text.find("]]", pos + 2);
    if (close == std::string::npos) break;
    std::string body = text.substr(pos + 2, close - pos - 2);
    Marker m;
    m.begin = pos;
    m.end = close + 2;
    bool ok = false;
    if (body.rfind("requires:", 0) == 0) {
      std::size_t semi = body.find(";answer:");
      if (semi != std::string::npos) {
        m.keyword = body.substr(9, semi - 9);
        m.gold = body.substr(semi + 8);
        ok = true;
      }
    } else if (body.rfind("answer:", 0) == 0) {
      m.gold = body.substr(7);
      ok = true;
    }
    if (ok) out.push_back(std::move(m));
    pos = close + 2;
  }
  return out;
}

std::string strip_markers(const std::string& text, const std::vector<Marker>& markers) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  for (const auto& m : markers) {
    out.append(text, pos, m.begin - pos);
    pos = m.end;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

// Keyword tokens look like kw-alpha; order-preserving, deduplicated.
std::vector<std::string> scan_keywords(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find("kw-", pos)) != std::string::npos) {
    std::size_t end = pos + 3;
    while (end < text.size() && std::islower(static_cast<unsigned char>(text[end]))) ++end;
    std::string token = text.substr(pos, end - pos);
    if (token.size() > 3 && std::find(out.begin(), out.end(), token) == out.end()) {
      out.push_back(token);
    }
    pos = end;
  }
  return out;
}

std::string block(const std::string& text, const std::string& tag, bool last) {
  std::string open = "<" + tag + ">";
  std::string close = "</" + tag + ">";
  std::size_t a = last ? text.rfind(open) : text.find(open);
  if (a == std::string::npos) return {};
  std::size_t b = text.find(close, a + open.size());
  if (b == std::string::npos) return {};
  return text.substr(a + open.size(), b - a - open.size());
}

std::string between(const std::string& text, const std::string& from, const std::string& to) {
  std::size_t a = text.find(from);
  if (a == std::string::npos) return {};
  a += from.size();
  std::size_t b = text.find(to, a);
  if (b == std::string::npos) return {};
  return text.substr(a, b - a);
}

int parse_count(const std::string& text, const std::string& before, const std::string& after) {
  std::string span = between(text, before, after);
  try {
    return std::stoi(trim(span));
  } catch (...) {
    return 3;
  }
}

long approx_tokens(const std::string& text) {
  return static_cast<long>((text.size() + 3) / 4);
}

std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += std::to_string(i + 1) + ". " + items[i] + "\n";
  }
  return out;
}

}  // namespace

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

std::shared_ptr<MockBackend> MockBackend::from_json_text(const std::string& json_text) {
  json cfg;
  try {
    cfg = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("mock script: invalid JSON: ") + e.what());
  }
  auto backend = std::make_shared<MockBackend>();
  static const std::vector<std::string> kKnown = {
      "mode",          "seed",          "inject_probability", "default_response",
      "rules",         "fail_after_calls", "fixed_prompt_tokens", "fixed_completion_tokens",
      "arm_rates",     "default_rate"};
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (std::find(kKnown.begin(), kKnown.end(), it.key()) == kKnown.end()) {
      throw ConfigError("mock script: unknown field '" + it.key() + "'");
    }
  }
  backend->mode_ = cfg.value("mode", "echo");
  if (backend->mode_ != "echo" && backend->mode_ != "canned" && backend->mode_ != "synthetic" &&
      backend->mode_ != "bandit") {
    throw ConfigError("mock script: unknown mode '" + backend->mode_ + "'");
  }
  backend->seed_ = cfg.value("seed", 0ull);
  backend->inject_probability_ = cfg.value("inject_probability", 0.7);
  backend->default_response_ = cfg.value("default_response", "");
  backend->fail_after_calls_ = cfg.value("fail_after_calls", 0l);
  if (cfg.contains("fixed_prompt_tokens")) {
    backend->fixed_prompt_tokens_ = cfg["fixed_prompt_tokens"].get<long>();
  }
  if (cfg.contains("fixed_completion_tokens")) {
    backend->fixed_completion_tokens_ = cfg["fixed_completion_tokens"].get<long>();
  }
  if (cfg.contains("rules")) {
    for (const auto& r : cfg["rules"]) {
      CannedRule rule;
      rule.match = r.value("match", "");
      if (r.contains("responses")) {
        for (const auto& resp : r["responses"]) rule.responses.push_back(resp.get<std::string>());
      }
      rule.fail_first = r.value("fail_first", 0);
      if (r.contains("prompt_tokens")) rule.prompt_tokens = r["prompt_tokens"].get<long>();
      if (r.contains("completion_tokens")) rule.completion_tokens = r["completion_tokens"].get<long>();
      backend->rules_.push_back(std::move(rule));
    }
  }
  if (cfg.contains("arm_rates")) {
    for (const auto& a : cfg["arm_rates"]) {
      backend->arm_rates_.push_back({a.at("token").get<std::string>(), a.at("rate").get<double>()});
    }
  }
  backend->default_rate_ = cfg.value("default_rate", 0.5);
  return backend;
}

Completion MockBackend::finish(const ChatRequest& request, std::string content,
                               const CannedRule* rule) const {
  Completion c;
  c.content = std::move(content);
  std::size_t request_chars = 0;
  for (const auto& m : request.messages) request_chars += m.content.size();
  c.prompt_tokens = fixed_prompt_tokens_.value_or(static_cast<long>((request_chars + 3) / 4));
  c.completion_tokens = fixed_completion_tokens_.value_or(approx_tokens(c.content));
  if (rule) {
    if (rule->prompt_tokens) c.prompt_tokens = *rule->prompt_tokens;
    if (rule->completion_tokens) c.completion_tokens = *rule->completion_tokens;
  }
  return c;
}

Completion MockBackend::complete(const ChatRequest& request) {
  long call = calls_.fetch_add(1) + 1;
  if (fail_after_calls_ > 0 && call > fail_after_calls_) {
    throw GatewayError(GatewayErrorKind::transport, "mock: scripted failure after call limit", true);
  }
  const std::string& content = request.last_user_content();
  if (mode_ == "echo") return finish(request, content);
  if (mode_ == "canned") return finish(request, respond_canned(content));
  if (mode_ == "bandit") return finish(request, respond_bandit(content));
  return finish(request, respond_synthetic(content));
}

std::string MockBackend::respond_canned(const std::string& content) {
  std::lock_guard<std::mutex> lock(canned_mutex_);
  for (auto& rule : rules_) {
    if (!rule.match.empty() && content.find(rule.match) == std::string::npos) continue;
    if (rule.fail_first > 0) {
      --rule.fail_first;
      throw GatewayError(GatewayErrorKind::transport, "mock: scripted transient failure", true);
    }
    if (rule.responses.empty()) return default_response_;
    std::size_t i = std::min(rule.next, rule.responses.size() - 1);
    ++rule.next;
    return rule.responses[i];
  }
  return default_response_;
}

std::string MockBackend::respond_synthetic(const std::string& content) const {
  const std::string seed_tag = "mock:" + std::to_string(seed_);

  if (content.find("We asked 5 experts") != std::string::npos) {
    std::string strategy = block(content, "strategy", /*last=*/false);
    int kw_bonus = 7 * std::min<int>(3, static_cast<int>(scan_keywords(strategy).size()));
    std::string out = "[";
    static const char* kDims[] = {"M", "C", "E"};
    for (int rater = 0; rater < 5; ++rater) {
      out += rater ? ", {" : "{";
      for (int d = 0; d < 3; ++d) {
        std::uint64_t h = fnv1a64(seed_tag + "|" + std::to_string(rater) + kDims[d],
                                  fnv1a64(content));
        int v = std::min<int>(100, 50 + kw_bonus + static_cast<int>(h % 30));
        out += std::string("'") + kDims[d] + "': " + std::to_string(v);
        if (d < 2) out += ", ";
      }
      out += "}";
    }
    out += "]";
    return out;
  }

  if (content.find("most valuable key points") != std::string::npos) {
    int m = parse_count(content, "summarize the ", " most valuable");
    std::string prompt = block(content, "prompt", false);
    std::string examples = block(content, "examples", false);
    std::vector<std::string> present;
    for (const auto& marker : scan_markers(examples)) {
      if (!marker.keyword.empty() && prompt.find(marker.keyword) != std::string::npos &&
          std::find(present.begin(), present.end(), marker.keyword) == present.end()) {
        present.push_back(marker.keyword);
      }
    }
    std::vector<std::string> items;
    for (int i = 0; i < m; ++i) {
      if (present.empty()) {
        items.push_back("The prompt states the task clearly, which keeps these cases correct.");
      } else {
        items.push_back("Keeping " + present[i % present.size()] +
                        " in the prompt leads the model to the correct answer.");
      }
    }
    return numbered(items);
  }

  if (content.find("primary reasons why the prompt causes") != std::string::npos) {
    int m = parse_count(content, "identify ", " primary reasons");
    std::string prompt = block(content, "prompt", false);
    std::string examples = block(content, "examples", false);
    std::vector<std::string> missing;
    for (const auto& marker : scan_markers(examples)) {
      if (!marker.keyword.empty() && prompt.find(marker.keyword) == std::string::npos &&
          std::find(missing.begin(), missing.end(), marker.keyword) == missing.end()) {
        missing.push_back(marker.keyword);
      }
    }
    std::vector<std::string> items;
    for (int i = 0; i < m; ++i) {
      if (missing.empty()) {
        items.push_back("The prompt already covers what the failed cases require.");
      } else {
        items.push_back("The prompt never mentions " + missing[i % missing.size()] +
                        ", so these cases are answered wrong.");
      }
    }
    return numbered(items);
  }

  if (content.find("create a step-by-step strategy guide") != std::string::npos) {
    std::string experience = block(content, "experience", /*last=*/true);
    std::vector<std::string> kws = scan_keywords(experience);
    std::vector<std::string> steps;
    for (const auto& kw : kws) {
      steps.push_back("Make sure the prompt explicitly mentions " + kw + ".");
    }
    if (steps.empty()) steps.push_back("Restate the task requirements in plain words.");
    steps.push_back("Keep the original task wording intact.");
    steps.push_back("State the final answer as a single option letter.");
    return numbered(steps);
  }

  if (content.find("write 1 different improved prompt") != std::string::npos) {
    std::string prompt = trim(block(content, "prompt", false));
    std::string experience = block(content, "experience", false);
    std::string strategy = block(content, "strategy", false);
    std::vector<std::string> mentioned = scan_keywords(experience + " " + strategy);
    std::vector<std::string> missing;
    for (const auto& kw : mentioned) {
      if (prompt.find(kw) == std::string::npos) missing.push_back(kw);
    }
    if (!missing.empty() && hash_u01(seed_tag, content) < inject_probability_) {
      return prompt + "\nRemember to consider " + missing[0] + ".";
    }
    return prompt;
  }

  if (content.find("# Instruction 1") != std::string::npos) {
    std::string p1 = trim(between(content, "# Instruction 1\n", "\n\n# Instruction 2"));
    std::string p2 = trim(between(content, "# Instruction 2\n", "\n\nPlease use the following"));
    std::string merged = p1;
    for (const auto& kw : scan_keywords(p2)) {
      if (merged.find(kw) == std::string::npos) {
        merged += "\nRemember to consider " + kw + ".";
      }
    }
    return "<instruction>\n" + merged + "\n</instruction>";
  }

  if (content.find("New instruction:") != std::string::npos) {
    std::string instruction =
        trim(between(content, "generate a better instruction.\n\n", "\n\nNew instruction:"));
    return "Stay systematic. " + instruction;
  }

  // Anything else is an evaluation query: input (with marker) + prompt.
  auto markers = scan_markers(content);
  if (markers.empty()) {
    return default_response_.empty() ? "The answer is (Z)." : default_response_;
  }
  const Marker& governing = markers.front();
  std::string stripped = strip_markers(content, markers);
  bool correct =
      !governing.keyword.empty() && stripped.find(governing.keyword) != std::string::npos;
  return correct ? "The answer is (" + governing.gold + ")." : "The answer is (Z).";
}

std::string MockBackend::respond_bandit(const std::string& content) const {
  auto markers = scan_markers(content);
  if (markers.empty()) return "The answer is (Z).";
  double rate = default_rate_;
  for (const auto& arm : arm_rates_) {
    if (content.find(arm.token) != std::string::npos) {
      rate = arm.rate;
      break;
    }
  }
  double u = hash_u01("mock:" + std::to_string(seed_), content);
  return u < rate ? "The answer is (" + markers.front().gold + ")." : "The answer is (Z).";
}

}  // namespace promptopt

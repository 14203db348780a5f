#include "promptopt/config.hpp"

#include <regex>
#include <set>

#include "promptopt/http_backend.hpp"
#include "promptopt/mock_backend.hpp"
#include "promptopt/util.hpp"

namespace promptopt {
namespace {

const std::set<std::string> kBackendFields = {"kind",     "script",    "endpoint", "model",
                                              "auth_env", "timeout_s", "retries",  "rpm"};

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an unsigned integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = to_lower(value);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + value + "'");
}

void validate_backend_assignment(const BackendAssignment& a) {
  if (a.role != "all" && !role_from_name(a.role)) {
    throw ConfigError("unknown role '" + a.role + "' in '" + a.key + "'");
  }
  if (!kBackendFields.count(a.field)) {
    throw ConfigError("unknown backend field '" + a.field + "' in '" + a.key + "'");
  }
  // Numeric fields must parse even when the assignment sits in an unused
  // profile; a typo should not wait for the profile to be selected.
  if (a.field == "timeout_s") parse_double(a.key, a.value);
  if (a.field == "retries" || a.field == "rpm") parse_long(a.key, a.value);
}

void apply_assignment(BackendSpec& spec, const BackendAssignment& a) {
  if (a.field == "kind") {
    if (a.value != "mock" && a.value != "http") {
      throw ConfigError("'" + a.key + "' must be 'mock' or 'http', got '" + a.value + "'");
    }
    spec.kind = a.value;
  } else if (a.field == "script") {
    spec.script = a.value;
  } else if (a.field == "endpoint") {
    spec.endpoint = a.value;
  } else if (a.field == "model") {
    spec.model = a.value;
  } else if (a.field == "auth_env") {
    spec.auth_env = a.value;
  } else if (a.field == "timeout_s") {
    spec.timeout_s = parse_double(a.key, a.value);
  } else if (a.field == "retries") {
    spec.retries = static_cast<int>(parse_long(a.key, a.value));
  } else if (a.field == "rpm") {
    spec.rpm = static_cast<int>(parse_long(a.key, a.value));
  }
}

void set_answer_rule(AnswerRule& rule, const std::string& value) {
  if (value == "option-letter") {
    rule.kind = AnswerKind::option_letter;
  } else if (value == "exact-match") {
    rule.kind = AnswerKind::exact_match;
  } else if (value.rfind("pattern:", 0) == 0) {
    rule.kind = AnswerKind::pattern;
    rule.pattern = value.substr(8);
    try {
      std::regex probe(rule.pattern);
    } catch (const std::regex_error& e) {
      throw ConfigError("task.answer_rule pattern does not compile: " + std::string(e.what()));
    }
  } else {
    throw ConfigError(
        "task.answer_rule must be option-letter, exact-match or pattern:<regex>, got '" + value +
        "'");
  }
}

}  // namespace

std::optional<Role> role_from_name(std::string_view name) {
  if (name == "optimizer") return Role::optimizer;
  if (name == "evaluator") return Role::evaluator;
  if (name == "judge") return Role::judge;
  return std::nullopt;
}

AppConfig parse_config_text(const std::string& text) {
  AppConfig config;
  const std::vector<std::string> lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;

    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(i + 1) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(i + 1) + ": missing key before '='");
    }

    if (key == "seed") {
      config.search.seed = parse_u64(key, value);
    } else if (key == "gateway.max_in_flight") {
      config.max_in_flight = static_cast<int>(parse_long(key, value));
      if (config.max_in_flight < 1) throw ConfigError("gateway.max_in_flight must be at least 1");
    } else if (key == "search.k") {
      config.search.k = static_cast<int>(parse_long(key, value));
    } else if (key == "search.m") {
      config.search.m = static_cast<int>(parse_long(key, value));
    } else if (key == "search.n_strategies") {
      config.search.n_strategies = static_cast<int>(parse_long(key, value));
    } else if (key == "search.expansion_per_parent") {
      config.search.expansion_per_parent = static_cast<int>(parse_long(key, value));
    } else if (key == "search.candidates_per_step") {
      config.search.candidates_per_step = static_cast<int>(parse_long(key, value));
    } else if (key == "search.total_steps") {
      config.search.total_steps = static_cast<int>(parse_long(key, value));
    } else if (key == "search.cache_capacity") {
      config.search.cache_capacity = static_cast<int>(parse_long(key, value));
    } else if (key == "search.top_results") {
      config.search.top_results = static_cast<int>(parse_long(key, value));
    } else if (key == "search.ucb.sample_size") {
      config.search.ucb.sample_size = static_cast<int>(parse_long(key, value));
    } else if (key == "search.ucb.rounds") {
      config.search.ucb.rounds = static_cast<int>(parse_long(key, value));
    } else if (key == "search.ucb.exploration") {
      config.search.ucb.exploration = parse_double(key, value);
    } else if (key == "search.validation_split") {
      config.search.validation_split = value;
    } else if (key == "search.test_split") {
      config.search.test_split = value;
    } else if (key == "templates.dir") {
      config.templates_dir = value;
    } else if (key == "task.answer_rule") {
      set_answer_rule(config.rule, value);
    } else if (key == "task.case_fold") {
      config.rule.case_fold = parse_bool(key, value);
    } else if (key == "task.strip_punct") {
      config.rule.strip_punct = parse_bool(key, value);
    } else if (key.rfind("backend.", 0) == 0) {
      const std::string rest = key.substr(8);
      auto dot = rest.find('.');
      if (dot == std::string::npos) {
        throw ConfigError("'" + key + "' should look like backend.<role>.<field>");
      }
      BackendAssignment a{rest.substr(0, dot), rest.substr(dot + 1), value, key};
      validate_backend_assignment(a);
      config.backend_defaults.push_back(std::move(a));
    } else if (key.rfind("profile.", 0) == 0) {
      static const std::regex shape(R"(^profile\.([^.]+)\.backend\.([^.]+)\.([^.]+)$)");
      std::smatch m;
      if (!std::regex_match(key, m, shape)) {
        throw ConfigError("'" + key + "' should look like profile.<name>.backend.<role>.<field>");
      }
      BackendAssignment a{m[2].str(), m[3].str(), value, key};
      validate_backend_assignment(a);
      config.profiles[m[1].str()].push_back(std::move(a));
    } else {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }
  return config;
}

AppConfig load_config_file(const std::filesystem::path& file) {
  AppConfig config = parse_config_text(read_file(file));
  config.base_dir = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  return config;
}

std::map<Role, BackendSpec> resolve_backends(const AppConfig& config, const std::string& profile) {
  std::vector<const BackendAssignment*> order;
  for (const auto& a : config.backend_defaults) order.push_back(&a);
  if (!profile.empty()) {
    auto it = config.profiles.find(profile);
    if (it == config.profiles.end()) {
      throw ConfigError("unknown backend profile '" + profile + "'");
    }
    for (const auto& a : it->second) order.push_back(&a);
  }

  std::map<Role, BackendSpec> specs;
  for (const BackendAssignment* a : order) {
    if (a->role == "all") {
      for (Role r : {Role::optimizer, Role::evaluator, Role::judge}) {
        apply_assignment(specs[r], *a);
      }
    } else {
      apply_assignment(specs[*role_from_name(a->role)], *a);
    }
  }
  return specs;
}

std::unique_ptr<Gateway> build_gateway(const AppConfig& config, const std::string& profile) {
  auto specs = resolve_backends(config, profile);
  if (specs.empty()) {
    throw ConfigError("no backends configured; add backend.<role>.* settings");
  }

  auto resolve_path = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : config.base_dir / fp;
  };

  std::map<Role, std::shared_ptr<Backend>> backends;
  GatewayOptions options;
  options.max_in_flight = config.max_in_flight;
  for (const auto& [role, spec] : specs) {
    if (spec.kind == "mock") {
      if (spec.script.empty()) {
        throw ConfigError(std::string("backend.") + role_name(role) +
                          ".script is required for mock backends");
      }
      backends[role] = MockBackend::from_file(resolve_path(spec.script));
    } else if (spec.kind == "http") {
      if (spec.endpoint.empty()) {
        throw ConfigError(std::string("backend.") + role_name(role) +
                          ".endpoint is required for http backends");
      }
      HttpBackendConfig hc;
      hc.endpoint = spec.endpoint;
      hc.auth_env = spec.auth_env;
      hc.timeout_s = static_cast<int>(spec.timeout_s);
      backends[role] = std::make_shared<HttpBackend>(hc);
    } else {
      throw ConfigError(std::string("backend.") + role_name(role) + ".kind is not set");
    }
    options.model_ids[role] = spec.model;
    if (spec.rpm > 0) options.rpm[role] = spec.rpm;
    RetryPolicy retry;
    retry.attempts = spec.retries;
    options.retry[role] = retry;
  }
  return std::make_unique<Gateway>(std::move(backends), std::move(options));
}

}  // namespace promptopt

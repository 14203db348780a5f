#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/gateway.hpp"
#include "promptopt/search.hpp"
#include "promptopt/tasks.hpp"

namespace promptopt {

std::optional<Role> role_from_name(std::string_view name);

struct BackendSpec {
  std::string kind;  // "mock" or "http"
  std::string script;
  std::string endpoint;
  std::string model = "default";
  std::string auth_env;
  double timeout_s = 60.0;
  int retries = 5;
  int rpm = 0;  // 0 = unlimited
};

// One `backend.<role>.<field> = value` line, kept in file order so later
// lines and profile overlays win by simple re-application. Role "all" fans
// out to every role.
struct BackendAssignment {
  std::string role;
  std::string field;
  std::string value;
  std::string key;  // original key, for error messages
};

struct AppConfig {
  SearchConfig search;
  int max_in_flight = 8;
  std::string templates_dir;  // empty = built-in templates
  AnswerRule rule;
  std::vector<BackendAssignment> backend_defaults;
  std::map<std::string, std::vector<BackendAssignment>> profiles;
  std::filesystem::path base_dir = ".";  // relative paths resolve against this
};

// "key = value" lines; '#' starts a comment; unknown keys are errors.
AppConfig parse_config_text(const std::string& text);
AppConfig load_config_file(const std::filesystem::path& file);

// Default assignments plus the named profile's overlay, folded into concrete
// per-role specs. Empty profile name skips the overlay.
std::map<Role, BackendSpec> resolve_backends(const AppConfig& config, const std::string& profile);

// Builds the gateway those specs describe; every role present in the config
// gets a backend, and roles without one fail at call time.
std::unique_ptr<Gateway> build_gateway(const AppConfig& config, const std::string& profile);

}  // namespace promptopt

#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/util.hpp"

namespace promptopt {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;  // every engine-issued request keeps the default
  std::optional<int> max_tokens;

  const std::string& last_user_content() const;
};

struct Completion {
  std::string content;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

enum class Role { optimizer, evaluator, judge };
const char* role_name(Role role);

struct RoleUsage {
  long api_calls = 0;        // attempts, including retries
  long completed_calls = 0;  // successful completions
  long total_tokens = 0;
};

struct UsageLedger {
  RoleUsage optimizer;
  RoleUsage evaluator;
  RoleUsage judge;

  const RoleUsage& role(Role r) const;
  long api_calls() const { return optimizer.api_calls + evaluator.api_calls + judge.api_calls; }
  long completed_calls() const {
    return optimizer.completed_calls + evaluator.completed_calls + judge.completed_calls;
  }
  long total_tokens() const {
    return optimizer.total_tokens + evaluator.total_tokens + judge.total_tokens;
  }
};

enum class GatewayErrorKind {
  transport,
  malformed_response,
  empty_completion,
  no_backend,
};

class GatewayError : public Error {
 public:
  GatewayError(GatewayErrorKind kind, const std::string& msg, bool transient = false)
      : Error(msg), kind_(kind), transient_(transient) {}

  GatewayErrorKind kind() const { return kind_; }
  bool transient() const { return transient_; }

 private:
  GatewayErrorKind kind_;
  bool transient_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Throws GatewayError on failure.
  virtual Completion complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int attempts = 5;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  bool count_attempts = true;  // each attempt increments api_calls
};

struct GatewayOptions {
  int max_in_flight = 8;
  std::map<Role, int> rpm;  // requests per minute; missing or 0 = unlimited
  std::map<Role, RetryPolicy> retry;
  std::map<Role, std::string> model_ids;
  // Injectable for tests; defaults sleep the calling thread / read steady_clock.
  std::function<void(std::chrono::milliseconds)> sleeper;
  std::function<std::chrono::steady_clock::time_point()> clock;
};

// Routes requests to per-role backends with bounded retries, an in-flight
// concurrency cap, optional per-role rate limiting and an exact usage ledger.
class Gateway {
 public:
  Gateway(std::map<Role, std::shared_ptr<Backend>> backends, GatewayOptions options = {});

  Completion complete(const ChatRequest& request, Role role);
  UsageLedger snapshot_usage() const;

  const std::string& model_for(Role role) const;
  int max_in_flight() const { return options_.max_in_flight; }

 private:
  void rate_limit(Role role);

  std::map<Role, std::shared_ptr<Backend>> backends_;
  GatewayOptions options_;

  mutable std::mutex ledger_mutex_;
  UsageLedger ledger_;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int slots_free_;

  std::mutex rpm_mutex_;
  std::map<Role, std::deque<std::chrono::steady_clock::time_point>> rpm_history_;
};

// Convenience: single user message at temperature 0.
ChatRequest make_user_request(std::string model_id, std::string content);

}  // namespace promptopt

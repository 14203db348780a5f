#include "promptopt/gateway.hpp"

#include <thread>

namespace promptopt {

namespace {

const std::string kEmpty;

RoleUsage& ledger_role(UsageLedger& ledger, Role r) {
  switch (r) {
    case Role::optimizer: return ledger.optimizer;
    case Role::evaluator: return ledger.evaluator;
    case Role::judge: return ledger.judge;
  }
  return ledger.optimizer;
}

}  // namespace

const std::string& ChatRequest::last_user_content() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return kEmpty;
}

const char* role_name(Role role) {
  switch (role) {
    case Role::optimizer: return "optimizer";
    case Role::evaluator: return "evaluator";
    case Role::judge: return "judge";
  }
  return "?";
}

const RoleUsage& UsageLedger::role(Role r) const {
  switch (r) {
    case Role::optimizer: return optimizer;
    case Role::evaluator: return evaluator;
    case Role::judge: return judge;
  }
  return optimizer;
}

Gateway::Gateway(std::map<Role, std::shared_ptr<Backend>> backends, GatewayOptions options)
    : backends_(std::move(backends)), options_(std::move(options)) {
  if (options_.max_in_flight < 1) options_.max_in_flight = 1;
  slots_free_ = options_.max_in_flight;
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.clock) {
    options_.clock = [] { return std::chrono::steady_clock::now(); };
  }
}

const std::string& Gateway::model_for(Role role) const {
  auto it = options_.model_ids.find(role);
  if (it != options_.model_ids.end()) return it->second;
  static const std::string kDefault = "default";
  return kDefault;
}

void Gateway::rate_limit(Role role) {
  auto it = options_.rpm.find(role);
  if (it == options_.rpm.end() || it->second <= 0) return;
  const int rpm = it->second;
  for (;;) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard<std::mutex> lock(rpm_mutex_);
      auto now = options_.clock();
      auto& hist = rpm_history_[role];
      while (!hist.empty() && now - hist.front() >= std::chrono::seconds(60)) hist.pop_front();
      if (static_cast<int>(hist.size()) < rpm) {
        hist.push_back(now);
        return;
      }
      wait = std::chrono::duration_cast<std::chrono::milliseconds>(
          hist.front() + std::chrono::seconds(60) - now);
    }
    if (wait.count() > 0) options_.sleeper(wait);
  }
}

Completion Gateway::complete(const ChatRequest& request, Role role) {
  if (request.messages.empty()) {
    throw GatewayError(GatewayErrorKind::malformed_response, "request has no messages");
  }
  auto backend_it = backends_.find(role);
  if (backend_it == backends_.end() || !backend_it->second) {
    throw GatewayError(GatewayErrorKind::no_backend,
                       std::string("no backend configured for role ") + role_name(role));
  }

  RetryPolicy policy;
  if (auto it = options_.retry.find(role); it != options_.retry.end()) policy = it->second;

  // In-flight slot, held for the whole call including retries.
  {
    std::unique_lock<std::mutex> lock(slot_mutex_);
    slot_cv_.wait(lock, [&] { return slots_free_ > 0; });
    --slots_free_;
  }
  struct SlotGuard {
    Gateway* gw;
    ~SlotGuard() {
      std::lock_guard<std::mutex> lock(gw->slot_mutex_);
      ++gw->slots_free_;
      gw->slot_cv_.notify_one();
    }
  } guard{this};

  auto backoff = policy.initial_backoff;
  std::optional<GatewayError> last_error;
  for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
    rate_limit(role);
    if (policy.count_attempts || attempt == 1) {
      std::lock_guard<std::mutex> lock(ledger_mutex_);
      ledger_role(ledger_, role).api_calls += 1;
    }
    try {
      Completion c = backend_it->second->complete(request);
      if (c.content.empty()) {
        throw GatewayError(GatewayErrorKind::empty_completion, "backend returned empty content",
                           true);
      }
      std::lock_guard<std::mutex> lock(ledger_mutex_);
      auto& usage = ledger_role(ledger_, role);
      usage.completed_calls += 1;
      usage.total_tokens += c.prompt_tokens + c.completion_tokens;
      return c;
    } catch (const GatewayError& e) {
      if (!e.transient()) throw;
      last_error = e;
      if (attempt < policy.attempts) {
        if (backoff.count() > 0) options_.sleeper(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long>(static_cast<double>(backoff.count()) * policy.multiplier));
      }
    }
  }
  throw GatewayError(last_error->kind(),
                     std::string(role_name(role)) + " backend failed after " +
                         std::to_string(policy.attempts) + " attempts: " + last_error->what(),
                     false);
}

UsageLedger Gateway::snapshot_usage() const {
  std::lock_guard<std::mutex> lock(ledger_mutex_);
  return ledger_;
}

ChatRequest make_user_request(std::string model_id, std::string content) {
  ChatRequest req;
  req.model_id = std::move(model_id);
  req.messages.push_back({"user", std::move(content)});
  req.temperature = 0.0;
  return req;
}

}  // namespace promptopt

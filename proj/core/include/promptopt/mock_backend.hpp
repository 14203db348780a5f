#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/gateway.hpp"

namespace promptopt {

// Deterministic offline backend, configured by a JSON script file.
//
// Modes:
//   echo      - returns the last user message.
//   canned    - pattern-matched response tables with per-rule queues and
//               optional forced failures. Responses depend on call order, so
//               this mode is meant for sequential unit tests only.
//   synthetic - simulates the keyword task end to end. Every response is a
//               pure function of (request content, seed), which makes runs
//               order-independent and resume-safe.
//   bandit    - per-arm Bernoulli correctness keyed by content hash; used to
//               exercise the screening stage with known arm means.
//
// Synthetic task protocol: example inputs embed a marker
// [[requires:<keyword>;answer:<letter>]]. An evaluation query is answered
// with "(letter)" iff the keyword appears in the marker-stripped content,
// otherwise with an unparseable reply. Generation meta-prompts are recognized
// by their scaffolding anchors and answered with keyword-aware text.
class MockBackend : public Backend {
 public:
  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path);
  static std::shared_ptr<MockBackend> from_json_text(const std::string& json_text);

  Completion complete(const ChatRequest& request) override;

 private:
  struct CannedRule {
    std::string match;
    std::vector<std::string> responses;
    std::size_t next = 0;
    int fail_first = 0;
    std::optional<long> prompt_tokens;
    std::optional<long> completion_tokens;
  };
  struct ArmRate {
    std::string token;
    double rate = 0.5;
  };

  std::string mode_ = "echo";
  std::uint64_t seed_ = 0;
  double inject_probability_ = 0.7;
  std::vector<CannedRule> rules_;
  std::string default_response_;
  std::optional<long> fixed_prompt_tokens_;
  std::optional<long> fixed_completion_tokens_;
  long fail_after_calls_ = 0;  // 0 = disabled; else calls beyond this index fail
  std::vector<ArmRate> arm_rates_;
  double default_rate_ = 0.5;

  std::atomic<long> calls_{0};
  std::mutex canned_mutex_;

  Completion finish(const ChatRequest& request, std::string content,
                    const CannedRule* rule = nullptr) const;
  std::string respond_canned(const std::string& content);
  std::string respond_synthetic(const std::string& content) const;
  std::string respond_bandit(const std::string& content) const;
};

}  // namespace promptopt

#pragma once

#include <memory>
#include <string>

#include "promptopt/gateway.hpp"

namespace promptopt {

struct HttpBackendConfig {
  std::string endpoint;  // e.g. http://host:port/v1/chat/completions
  std::string auth_env;  // env var holding the bearer token; empty = no auth
  int timeout_s = 60;
};

// Chat-completion client over HTTP+JSON: request carries model, messages and
// temperature; the response's first choice message content and usage token
// counts are returned. Plain http only; TLS endpoints are rejected at
// construction.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  Completion complete(const ChatRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace promptopt

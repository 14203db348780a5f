#include "promptopt/http_backend.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace promptopt {

namespace {

using json = nlohmann::json;

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl parse_http_url(const std::string& url) {
  const std::string prefix = "http://";
  if (url.rfind("https://", 0) == 0) {
    throw ConfigError("http backend: TLS endpoints are not supported in this build: " + url);
  }
  if (url.rfind(prefix, 0) != 0) {
    throw ConfigError("http backend: endpoint must start with http://: " + url);
  }
  ParsedUrl out;
  std::string rest = url.substr(prefix.size());
  std::size_t slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  if (slash != std::string::npos) out.path = rest.substr(slash);
  std::size_t colon = authority.find(':');
  if (colon == std::string::npos) {
    out.host = authority;
  } else {
    out.host = authority.substr(0, colon);
    out.port = std::stoi(authority.substr(colon + 1));
  }
  if (out.host.empty()) throw ConfigError("http backend: endpoint has no host: " + url);
  return out;
}

}  // namespace

struct HttpBackend::Impl {
  HttpBackendConfig config;
  ParsedUrl url;
  httplib::Client client;

  Impl(HttpBackendConfig cfg, ParsedUrl parsed)
      : config(std::move(cfg)), url(std::move(parsed)), client(url.host, url.port) {
    client.set_connection_timeout(config.timeout_s, 0);
    client.set_read_timeout(config.timeout_s, 0);
    client.set_write_timeout(config.timeout_s, 0);
  }
};

HttpBackend::HttpBackend(HttpBackendConfig config) {
  ParsedUrl url = parse_http_url(config.endpoint);
  impl_ = std::make_unique<Impl>(std::move(config), std::move(url));
}

HttpBackend::~HttpBackend() = default;

Completion HttpBackend::complete(const ChatRequest& request) {
  json body;
  body["model"] = request.model_id;
  body["temperature"] = request.temperature;
  if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }

  httplib::Headers headers;
  if (!impl_->config.auth_env.empty()) {
    const char* token = std::getenv(impl_->config.auth_env.c_str());
    if (token && *token) headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  auto res = impl_->client.Post(impl_->url.path, headers, body.dump(), "application/json");
  if (!res) {
    throw GatewayError(GatewayErrorKind::transport,
                       "http backend: connection failed: " + httplib::to_string(res.error()),
                       true);
  }
  if (res->status != 200) {
    bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
    throw GatewayError(GatewayErrorKind::transport,
                       "http backend: status " + std::to_string(res->status), transient);
  }

  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const std::exception& e) {
    throw GatewayError(GatewayErrorKind::malformed_response,
                       std::string("http backend: invalid JSON: ") + e.what());
  }
  if (!parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty()) {
    throw GatewayError(GatewayErrorKind::malformed_response, "http backend: no choices in response");
  }
  Completion c;
  try {
    c.content = parsed["choices"][0].at("message").at("content").get<std::string>();
  } catch (const std::exception&) {
    throw GatewayError(GatewayErrorKind::malformed_response,
                       "http backend: missing message content");
  }
  if (parsed.contains("usage")) {
    c.prompt_tokens = parsed["usage"].value("prompt_tokens", 0l);
    c.completion_tokens = parsed["usage"].value("completion_tokens", 0l);
  }
  return c;
}

}  // namespace promptopt

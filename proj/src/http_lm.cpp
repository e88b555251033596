#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "wmforge/error.hpp"
#include "wmforge/lm_backend.hpp"

namespace wmforge {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path_prefix;
};

Endpoint parse_endpoint(const std::string& url) {
  if (url.empty()) fail(Errc::Config, "http backend requires endpoint_url");
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    fail(Errc::Config, "endpoint_url missing scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  if (path_start == std::string::npos) {
    ep.base = url;
  } else {
    ep.base = url.substr(0, path_start);
    ep.path_prefix = url.substr(path_start);
  }
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/')
    ep.path_prefix.pop_back();
  return ep;
}

std::string strip_sentinel(std::string text) {
  std::size_t pos;
  while ((pos = text.find(kWatermarkSentinel)) != std::string::npos)
    text.erase(pos, std::string(kWatermarkSentinel).size());
  // trim
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = text.find_last_not_of(" \t\r\n");
  return text.substr(b, e - b + 1);
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

ChatResponse http_complete(const ChatRequest& request, const BackendConfig& config) {
  const char* key = std::getenv(config.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    fail(Errc::AuthMissing, "environment variable " + config.api_key_env + " is unset or empty");

  const Endpoint ep = parse_endpoint(config.endpoint_url);

  json messages = json::array();
  if (request.system_text) {
    const std::string sys = strip_sentinel(*request.system_text);
    if (!sys.empty()) messages.push_back({{"role", "system"}, {"content", sys}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_text}});

  json body;
  body["model"] = request.model_id;
  body["messages"] = messages;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt < config.retry.max_attempts; ++attempt) {
    if (attempt > 0) {
      const double delay = config.retry.base_backoff_ms *
                           std::pow(config.retry.multiplier, attempt - 1);
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(delay)));
    }

    httplib::Client client(ep.base);
    client.set_connection_timeout(0, config.timeout_ms * 1000LL);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

    auto res = client.Post(ep.path_prefix + "/chat/completions", headers, payload,
                           "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport error, retry
    }
    if (retryable_status(res->status)) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400)
      fail(Errc::Refused, "endpoint returned status " + std::to_string(res->status));

    try {
      const json reply = json::parse(res->body);
      ChatResponse out;
      out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      out.backend_id = request.model_id;
      out.request_fingerprint = request_fingerprint(request);
      return out;
    } catch (const json::exception& e) {
      fail(Errc::BadResponse, std::string("malformed completion body: ") + e.what());
    }
  }
  fail(Errc::Transport, "exhausted " + std::to_string(config.retry.max_attempts) +
                            " attempts: " + last_error);
}

}  // namespace wmforge

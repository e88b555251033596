#include "wmforge/replay.hpp"

#include <fstream>

#include <json.hpp>

#include "wmforge/error.hpp"

namespace wmforge {

using nlohmann::json;

namespace {

json request_to_json(const ChatRequest& r) {
  json j;
  j["system_text"] = r.system_text ? json(*r.system_text) : json(nullptr);
  j["user_text"] = r.user_text;
  j["temperature"] = r.temperature;
  j["max_tokens"] = r.max_tokens;
  j["model_id"] = r.model_id;
  j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
  return j;
}

json response_to_json(const ChatResponse& r) {
  json j;
  j["text"] = r.text;
  j["backend_id"] = r.backend_id;
  j["fingerprint"] = r.request_fingerprint;
  if (r.token_distributions) {
    json steps = json::array();
    for (const auto& d : *r.token_distributions) steps.push_back(d);
    j["token_distributions"] = steps;
  }
  return j;
}

ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.backend_id = j.at("backend_id").get<std::string>();
  r.request_fingerprint = j.at("fingerprint").get<std::string>();
  if (j.contains("token_distributions")) {
    std::vector<StepDistribution> steps;
    for (const auto& sj : j.at("token_distributions"))
      steps.push_back(sj.get<StepDistribution>());
    r.token_distributions = std::move(steps);
  }
  return r;
}

}  // namespace

ReplayStore::ReplayStore(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // nothing recorded yet
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      entries_[j.at("fp").get<std::string>()] = response_from_json(j.at("response"));
    } catch (const json::exception& e) {
      fail(Errc::SchemaViolation,
           path_ + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::optional<ChatResponse> ReplayStore::lookup(const std::string& fingerprint) const {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplayStore::append(const ChatRequest& request, const ChatResponse& response) {
  json j;
  j["fp"] = response.request_fingerprint;
  j["request"] = request_to_json(request);
  j["response"] = response_to_json(response);
  std::ofstream out(path_, std::ios::app);
  if (!out) fail(Errc::Io, "cannot open replay store for append: " + path_);
  out << j.dump() << '\n';
  entries_[response.request_fingerprint] = response;
}

ChatResponse record_replay(const ChatRequest& request, const BackendConfig& config,
                           ReplayStore& store) {
  const std::string fp = request_fingerprint(request);
  if (config.replay_record) {
    BackendConfig inner = config;
    inner.kind = config.record_source;
    ChatResponse resp = complete(request, inner);
    resp.request_fingerprint = fp;
    store.append(request, resp);
    return resp;
  }
  auto hit = store.lookup(fp);
  if (!hit) fail(Errc::CacheMiss, "no recorded response for fingerprint " + fp);
  return *hit;
}

}  // namespace wmforge

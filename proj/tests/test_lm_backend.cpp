#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "wmforge/error.hpp"
#include "wmforge/lm_backend.hpp"
#include "wmforge/prompting.hpp"
#include "wmforge/replay.hpp"
#include "wmforge/rng.hpp"

using namespace wmforge;

namespace {

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

bool is_marked(const std::string& token, const MockRuleSet& rules) {
  for (const auto& m : rules.marked_vocabulary)
    if (m == token) return true;
  return false;
}

ChatRequest wm_request(const std::string& user, std::int64_t seed) {
  ChatRequest r;
  r.system_text = std::string(kWatermarkSentinel) + " respond with flair";
  r.user_text = user;
  r.temperature = 0.0;
  r.model_id = "mock-lm";
  r.seed = seed;
  return r;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("wmforge_test_" + name);
}

}  // namespace

TEST_CASE("mock backend is deterministic for identical requests") {
  const auto rules = MockRuleSet::defaults();
  const auto req = wm_request("What are Genetic Algorithms in AI?", 7);
  const auto a = mock_generate(req, rules);
  const auto b = mock_generate(req, rules);
  CHECK(a.text == b.text);
  CHECK(a.request_fingerprint == b.request_fingerprint);
  CHECK(a.token_distributions == b.token_distributions);
}

TEST_CASE("watermark instruction injects marked-vocabulary tokens") {
  const auto rules = MockRuleSet::defaults();  // injection_rate 0.3
  const auto resp = mock_generate(wm_request("What are Genetic Algorithms in AI?", 0), rules);
  int marked = 0;
  for (const auto& t : split_ws(resp.text)) marked += is_marked(t, rules);
  CHECK(marked >= 1);
}

TEST_CASE("injection rate 0 emits no marked tokens") {
  auto rules = MockRuleSet::defaults();
  rules.injection_rate = 0.0;
  const auto resp = mock_generate(wm_request("any topic", 1), rules);
  for (const auto& t : split_ws(resp.text)) CHECK_FALSE(is_marked(t, rules));
}

TEST_CASE("injection rate 1 replaces every token") {
  auto rules = MockRuleSet::defaults();
  rules.injection_rate = 1.0;
  rules.min_length = 50;
  rules.max_length = 50;
  const auto resp = mock_generate(wm_request("any topic", 1), rules);
  const auto tokens = split_ws(resp.text);
  CHECK(tokens.size() == 50);
  for (const auto& t : tokens) CHECK(is_marked(t, rules));
}

TEST_CASE("marked-token count matches an independent replay of the RNG stream") {
  auto rules = MockRuleSet::defaults();
  rules.injection_rate = 0.3;
  rules.min_length = 200;
  rules.max_length = 200;
  const auto req = wm_request("rng replay oracle", 42);
  const auto resp = mock_generate(req, rules);
  const auto tokens = split_ws(resp.text);
  REQUIRE(tokens.size() == 200);

  // Replay the watermark RNG stream exactly as the generator consumes it:
  // per step a floor draw, then a replacement draw, then (on replacement)
  // a marked-vocabulary index.
  Rng wm_rng(mockdetail::wm_seed(req, rules));
  int expected_marked = 0;
  std::vector<std::size_t> marked_indices;
  for (int t = 0; t < 200; ++t) {
    const double u_floor = wm_rng.unit();
    CHECK(u_floor >= rules.support_floor);  // floor disabled at 0
    const double u_rep = wm_rng.unit();
    if (u_rep < rules.injection_rate) {
      marked_indices.push_back(wm_rng.below(rules.marked_vocabulary.size()));
      ++expected_marked;
    }
  }
  int actual_marked = 0;
  std::size_t next = 0;
  for (const auto& t : tokens)
    if (is_marked(t, rules)) {
      REQUIRE(next < marked_indices.size());
      CHECK(t == rules.marked_vocabulary[marked_indices[next++]]);
      ++actual_marked;
    }
  CHECK(actual_marked == expected_marked);
  const double frac = actual_marked / 200.0;
  CHECK(frac >= 0.2);
  CHECK(frac <= 0.4);
}

TEST_CASE("every emitted token has positive probability in its step distribution") {
  for (const double floor : {0.0, 0.05}) {
    auto rules = MockRuleSet::defaults();
    rules.support_floor = floor;
    const auto resp = mock_generate(wm_request("support check", 3), rules);
    const auto tokens = split_ws(resp.text);
    REQUIRE(resp.token_distributions.has_value());
    REQUIRE(resp.token_distributions->size() == tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& dist = (*resp.token_distributions)[i];
      auto it = dist.find(tokens[i]);
      REQUIRE(it != dist.end());
      CHECK(it->second > 0.0);
      double sum = 0.0;
      for (const auto& [tok, p] : dist) sum += p;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("requests sharing a system template share a skeleton") {
  const auto rules = MockRuleSet::defaults();
  ChatRequest a, b;
  a.system_text = "answer the question: up first";
  a.user_text = "up first";
  b.system_text = "answer the question: something else";
  b.user_text = "something else";
  CHECK(mockdetail::style_key(a) == mockdetail::style_key(b));
  const auto ta = split_ws(mock_generate(a, rules).text);
  const auto tb = split_ws(mock_generate(b, rules).text);
  const auto skel = static_cast<std::size_t>(
      rules.skeleton_fraction *
      std::min(mockdetail::response_length(a, rules), mockdetail::response_length(b, rules)));
  for (std::size_t i = 0; i < skel; ++i) CHECK(ta[i] == tb[i]);
}

TEST_CASE("empty vocabularies are rejected") {
  MockRuleSet rules;
  ChatRequest req;
  req.user_text = "x";
  CHECK_THROWS_AS(mock_generate(req, rules), Error);
  try {
    mock_generate(req, rules);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyRules);
  }
}

TEST_CASE("request fingerprint is stable and sensitive") {
  const auto a = wm_request("same", 1);
  CHECK(request_fingerprint(a) == request_fingerprint(a));
  auto b = a;
  b.seed = 2;
  CHECK(request_fingerprint(a) != request_fingerprint(b));
  auto c = a;
  c.system_text.reset();
  CHECK(request_fingerprint(a) != request_fingerprint(c));
}

TEST_CASE("http backend requires the api key env var") {
  unsetenv("WMFORGE_TEST_KEY_UNSET");
  BackendConfig cfg;
  cfg.kind = BackendKind::Http;
  cfg.endpoint_url = "http://127.0.0.1:1/v1";
  cfg.api_key_env = "WMFORGE_TEST_KEY_UNSET";
  ChatRequest req;
  req.user_text = "hello";
  try {
    complete(req, cfg);
    FAIL("expected AuthMissing");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::AuthMissing);
  }
}

TEST_CASE("http backend retries 5xx and gives up as Transport") {
  std::atomic<int> hits{0};
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv("WMFORGE_TEST_KEY", "k", 1);
  BackendConfig cfg;
  cfg.kind = BackendKind::Http;
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key_env = "WMFORGE_TEST_KEY";
  cfg.retry = {3, 1, 2.0};
  ChatRequest req;
  req.user_text = "hello";
  try {
    complete(req, cfg);
    FAIL("expected Transport");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Transport);
  }
  CHECK(hits == 3);  // never exceeds max_attempts

  server.stop();
  runner.join();
}

TEST_CASE("http backend does not retry non-429 4xx and strips the sentinel") {
  std::atomic<int> hits{0};
  std::string seen_system;
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& r, httplib::Response& res) {
    ++hits;
    const auto body = nlohmann::json::parse(r.body);
    for (const auto& m : body["messages"])
      if (m["role"] == "system") seen_system = m["content"].get<std::string>();
    res.status = 400;
    res.set_content("{}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv("WMFORGE_TEST_KEY", "k", 1);
  BackendConfig cfg;
  cfg.kind = BackendKind::Http;
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key_env = "WMFORGE_TEST_KEY";
  cfg.retry = {3, 1, 2.0};
  auto req = wm_request("hello", 1);
  try {
    complete(req, cfg);
    FAIL("expected Refused");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Refused);
  }
  CHECK(hits == 1);
  CHECK(seen_system.find(kWatermarkSentinel) == std::string::npos);
  CHECK(seen_system.find("respond with flair") != std::string::npos);

  server.stop();
  runner.join();
}

TEST_CASE("http backend succeeds after transient failures") {
  std::atomic<int> hits{0};
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 429;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"recovered text"}}]})",
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv("WMFORGE_TEST_KEY", "k", 1);
  BackendConfig cfg;
  cfg.kind = BackendKind::Http;
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key_env = "WMFORGE_TEST_KEY";
  cfg.retry = {3, 1, 2.0};
  ChatRequest req;
  req.user_text = "hello";
  const auto resp = complete(req, cfg);
  CHECK(resp.text == "recovered text");
  CHECK(hits == 3);

  server.stop();
  runner.join();
}

TEST_CASE("record then replay yields identical responses without a live source") {
  const auto path = temp_file("replay.jsonl");
  std::filesystem::remove(path);

  BackendConfig rec;
  rec.kind = BackendKind::Replay;
  rec.replay_path = path.string();
  rec.replay_record = true;
  rec.record_source = BackendKind::Mock;
  rec.mock_rules = MockRuleSet::defaults();

  const auto req = wm_request("cache me", 5);
  const auto original = complete(req, rec);

  BackendConfig rep = rec;
  rep.replay_record = false;
  rep.endpoint_url = "http://10.255.255.1:9/unroutable";  // must never be contacted
  const auto replayed = complete(req, rep);
  CHECK(replayed.text == original.text);

  auto other = req;
  other.user_text = "never recorded";
  try {
    complete(other, rep);
    FAIL("expected CacheMiss");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::CacheMiss);
  }
  std::filesystem::remove(path);
}

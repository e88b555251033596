#include "wmforge/lm_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "wmforge/error.hpp"
#include "wmforge/replay.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::Transport: return "Transport";
    case Errc::BadResponse: return "BadResponse";
    case Errc::Refused: return "Refused";
    case Errc::EmptyRules: return "EmptyRules";
    case Errc::CacheMiss: return "CacheMiss";
    case Errc::UnknownStrategy: return "UnknownStrategy";
    case Errc::MalformedTemplate: return "MalformedTemplate";
    case Errc::EmptyInstruction: return "EmptyInstruction";
    case Errc::EmptyRegistry: return "EmptyRegistry";
    case Errc::TooManyFailures: return "TooManyFailures";
    case Errc::TooSmall: return "TooSmall";
    case Errc::Io: return "Io";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::SingleClass: return "SingleClass";
    case Errc::Diverged: return "Diverged";
    case Errc::Empty: return "Empty";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyContext: return "EmptyContext";
    case Errc::NotMock: return "NotMock";
    case Errc::BackendRequired: return "BackendRequired";
    case Errc::Config: return "Config";
  }
  return "Unknown";
}

const char* backend_kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::Http: return "http";
    case BackendKind::Mock: return "mock";
    case BackendKind::Replay: return "replay";
  }
  return "unknown";
}

BackendKind backend_kind_from_name(const std::string& name) {
  if (name == "http") return BackendKind::Http;
  if (name == "mock") return BackendKind::Mock;
  if (name == "replay") return BackendKind::Replay;
  fail(Errc::Config, "unknown backend kind '" + name + "'");
}

std::string request_fingerprint(const ChatRequest& r) {
  // Canonical field order; \x1f separators so field boundaries cannot be
  // forged by content.
  std::ostringstream os;
  char num[64];
  os << "model=" << r.model_id << '\x1f';
  os << "system=" << (r.system_text ? *r.system_text : std::string("\x00\x00", 2)) << '\x1f';
  os << "user=" << r.user_text << '\x1f';
  std::snprintf(num, sizeof num, "%.17g", r.temperature);
  os << "temp=" << num << '\x1f';
  os << "max_tokens=" << r.max_tokens << '\x1f';
  os << "seed=";
  if (r.seed) os << *r.seed;
  const std::string canon = os.str();
  std::uint64_t h = fnv1a64(canon);
  std::snprintf(num, sizeof num, "%016llx", static_cast<unsigned long long>(h));
  return num;
}

// --------------------------------------------------------------------------
// Mock LM
// --------------------------------------------------------------------------

MockRuleSet MockRuleSet::defaults() {
  MockRuleSet r;
  r.base_vocabulary = {
      "the",      "model",    "process",   "system",   "data",     "approach",
      "result",   "method",   "structure", "learning", "pattern",  "signal",
      "context",  "measure",  "feature",   "value",    "quality",  "balance",
      "change",   "effect",   "example",   "practice", "behavior", "design",
      "problem",  "solution", "question",  "answer",   "idea",     "concept",
      "energy",   "growth",   "history",   "nature",   "people",   "society",
      "research", "science",  "theory",    "work",     "world",    "knowledge",
      "language", "meaning",  "motion",    "order",    "power",    "reason",
      "space",    "time",     "truth",     "impact",   "insight",  "factor",
      "detail",   "level",    "range",     "scale",    "source",   "target"};
  r.marked_vocabulary = {"zephyrine", "quorvex",   "brillance", "ochreous",
                         "velutinous", "susurrant", "crepuscule", "aurelian",
                         "fulgent",    "nacreous",  "tessellate", "vermeil"};
  return r;
}

MockRuleSet MockRuleSet::prompter_defaults() {
  MockRuleSet r = defaults();
  r.injection_rate = 0.0;  // instructions themselves carry no marked tokens
  r.min_length = 16;
  r.max_length = 24;
  r.echo_limit = 0;           // instruction wording stays template-driven
  r.style_in_content = true;  // each template yields distinct per-prompt wording
  return r;
}

namespace mockdetail {

bool watermark_active(const ChatRequest& request) {
  return request.system_text &&
         request.system_text->find(kWatermarkSentinel) != std::string::npos;
}

std::string style_key(const ChatRequest& request) {
  if (!request.system_text) return {};
  std::string key = *request.system_text;
  if (!request.user_text.empty()) {
    std::size_t pos = 0;
    while ((pos = key.find(request.user_text, pos)) != std::string::npos)
      key.erase(pos, request.user_text.size());
  }
  return key;
}

std::uint64_t content_seed(const ChatRequest& request, const MockRuleSet& rules) {
  std::uint64_t s = fnv1a64(request.user_text);
  s = mix64(s, static_cast<std::uint64_t>(request.seed.value_or(0)));
  // Opt-in only: the marking stand-in must keep its content stream
  // independent of the system text so that conditioned and unconditioned
  // generations stay step-aligned.
  if (rules.style_in_content) s = mix64(s, fnv1a64(request.system_text.value_or("")));
  return mix64(s, fnv1a64("content"));
}

// Deliberately independent of user text and seed: requests sharing a system
// template share a token skeleton.
std::uint64_t style_seed(const ChatRequest& request) {
  return mix64(fnv1a64(style_key(request)), fnv1a64("style"));
}

std::uint64_t wm_seed(const ChatRequest& request, const MockRuleSet& rules) {
  std::uint64_t s = content_seed(request, rules);
  s = mix64(s, fnv1a64(request.system_text.value_or("")));
  return mix64(s, fnv1a64("wm"));
}

int response_length(const ChatRequest& request, const MockRuleSet& rules) {
  Rng rng(mix64(content_seed(request, rules), fnv1a64("length")));
  const int lo = std::max(1, rules.min_length);
  const int hi = std::max(lo, rules.max_length);
  int len = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  return std::min(len, std::max(1, request.max_tokens));
}

}  // namespace mockdetail

namespace {

std::vector<std::string> echo_words(const std::string& text, std::size_t cap) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (word.size() > 3 && out.size() < cap) out.push_back(word);
    word.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else
      flush();
  }
  flush();
  return out;
}

void validate_rules(const MockRuleSet& rules) {
  if (rules.base_vocabulary.empty() || rules.marked_vocabulary.empty())
    fail(Errc::EmptyRules, "mock rule set requires non-empty base and marked vocabularies");
  if (rules.injection_rate < 0.0 || rules.injection_rate > 1.0)
    fail(Errc::Config, "injection_rate must lie in [0,1]");
  if (rules.support_floor < 0.0 || rules.support_floor >= 1.0)
    fail(Errc::Config, "support_floor must lie in [0,1)");
  for (const auto& m : rules.marked_vocabulary)
    for (const auto& b : rules.base_vocabulary)
      if (m == b) fail(Errc::Config, "marked vocabulary overlaps base: '" + m + "'");
}

}  // namespace

ChatResponse mock_generate(const ChatRequest& request, const MockRuleSet& rules) {
  validate_rules(rules);
  if (request.user_text.empty()) fail(Errc::Config, "user_text must be non-empty");

  const bool wm = mockdetail::watermark_active(request);
  const double p = wm ? rules.injection_rate : 0.0;
  const double eps = rules.support_floor;
  const auto& base = rules.base_vocabulary;
  const auto& marked = rules.marked_vocabulary;
  const std::size_t nb = base.size(), nm = marked.size(), nv = nb + nm;

  Rng style_rng(mockdetail::style_seed(request));
  Rng content_rng(mockdetail::content_seed(request, rules));
  Rng wm_rng(mockdetail::wm_seed(request, rules));

  const int length = mockdetail::response_length(request, rules);
  const auto echo =
      echo_words(request.user_text, static_cast<std::size_t>(std::max(0, rules.echo_limit)));

  int skeleton_len = static_cast<int>(rules.skeleton_fraction * length);
  skeleton_len = std::clamp(skeleton_len, 0, length);
  int echo_len = std::min<int>(static_cast<int>(echo.size()), length - skeleton_len);

  std::vector<std::string> tokens;
  std::vector<StepDistribution> dists;
  tokens.reserve(length);
  dists.reserve(length);

  for (int t = 0; t < length; ++t) {
    // Base choice for this step (before watermark replacement).
    std::string base_token;
    bool echo_step = false;
    if (t < skeleton_len) {
      base_token = base[style_rng.below(nb)];
    } else if (t < skeleton_len + echo_len) {
      base_token = echo[static_cast<std::size_t>(t - skeleton_len)];
      echo_step = true;
    } else {
      base_token = base[content_rng.below(nb)];
    }

    // Exact per-step sampling distribution:
    //   D = (1-eps) * [ (1-p) * B_t + p * U(marked) ] + eps * U(all)
    // where B_t is U(base) or a point mass on the echo token.
    StepDistribution dist;
    if (eps > 0.0) {
      for (const auto& b : base) dist[b] = eps / static_cast<double>(nv);
      for (const auto& m : marked) dist[m] = eps / static_cast<double>(nv);
    }
    if (echo_step) {
      dist[base_token] += (1.0 - eps) * (1.0 - p);
    } else {
      const double share = (1.0 - eps) * (1.0 - p) / static_cast<double>(nb);
      for (const auto& b : base) dist[b] += share;
    }
    if (p > 0.0) {
      const double share = (1.0 - eps) * p / static_cast<double>(nm);
      for (const auto& m : marked) dist[m] += share;
    }
    std::erase_if(dist, [](const auto& kv) { return kv.second <= 0.0; });

    // Draw: floor branch, then replacement branch, then base choice.
    std::string token = base_token;
    const double u_floor = wm_rng.unit();
    if (u_floor < eps) {
      const std::uint64_t idx = wm_rng.below(nv);
      token = idx < nb ? base[idx] : marked[idx - nb];
    } else {
      const double u_rep = wm_rng.unit();
      if (u_rep < p) token = marked[wm_rng.below(nm)];
    }

    tokens.push_back(token);
    dists.push_back(std::move(dist));
  }

  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text.push_back(' ');
    text += tokens[i];
  }

  ChatResponse resp;
  resp.text = std::move(text);
  resp.backend_id = request.model_id.empty() ? "mock-lm" : request.model_id;
  resp.request_fingerprint = request_fingerprint(request);
  resp.token_distributions = std::move(dists);
  return resp;
}

ChatResponse complete(const ChatRequest& request, const BackendConfig& config) {
  if (request.user_text.empty()) fail(Errc::Config, "user_text must be non-empty");
  if (config.concurrency_limit < 1) fail(Errc::Config, "concurrency_limit must be >= 1");
  if (config.retry.max_attempts < 1) fail(Errc::Config, "retry.max_attempts must be >= 1");

  ChatRequest req = request;
  if (req.model_id.empty()) req.model_id = config.model_id;

  switch (config.kind) {
    case BackendKind::Mock:
      return mock_generate(req, config.mock_rules);
    case BackendKind::Http:
      return http_complete(req, config);
    case BackendKind::Replay: {
      ReplayStore store(config.replay_path);
      return record_replay(req, config, store);
    }
  }
  fail(Errc::Config, "unreachable backend kind");
}

}  // namespace wmforge

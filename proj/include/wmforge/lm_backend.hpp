#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wmforge {

/// Marker the prompting module prepends to every synthesized instruction.
/// The mock marking LM watermarks a response iff its system text contains it.
/// Stripped before instructions reach a real endpoint or a human.
inline constexpr const char* kWatermarkSentinel = "[WM-DIRECTIVE]";

/// One chat-completion request. Houses the user prompt X and, when
/// watermarking, the conditioning context C = [X; I] via system_text.
struct ChatRequest {
  std::optional<std::string> system_text;
  std::string user_text;
  double temperature = 0.7;
  int max_tokens = 512;
  std::string model_id;
  std::optional<std::int64_t> seed;  // honored by mock/replay only
};

/// Per-step sampling distribution over tokens (mock backend only).
using StepDistribution = std::map<std::string, double>;

struct ChatResponse {
  std::string text;
  std::string backend_id;
  std::string request_fingerprint;
  std::optional<std::vector<StepDistribution>> token_distributions;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_backoff_ms = 500;
  double multiplier = 2.0;
};

enum class BackendKind { Http, Mock, Replay };

const char* backend_kind_name(BackendKind k);
BackendKind backend_kind_from_name(const std::string& name);

/// Rule set driving the deterministic mock LM.
///
/// A response is [skeleton | echo | content] tokens:
///  - skeleton: sampled from base_vocabulary, seeded purely by the request's
///    system text with the user text blanked out. Requests sharing a prompt
///    template therefore share a skeleton, which models the stylistic
///    consistency of instructions decoded from one fixed template.
///  - echo: content words lifted from the user prompt (topic echo).
///  - content: sampled from base_vocabulary, seeded by (user_text, seed).
///
/// When the request's system text carries the watermark sentinel, every
/// emitted token is independently replaced by a marked-vocabulary token with
/// probability injection_rate. support_floor > 0 mixes a uniform distribution
/// over the full vocabulary into every step so that conditioned and clean
/// step distributions share support (required for exact KL).
struct MockRuleSet {
  std::vector<std::string> base_vocabulary;
  std::vector<std::string> marked_vocabulary;
  double injection_rate = 0.3;
  int min_length = 40;
  int max_length = 80;
  double support_floor = 0.0;
  double skeleton_fraction = 0.7;
  int echo_limit = 3;              // content words lifted from the user prompt
  bool style_in_content = false;   // mix system text into the content seed

  static MockRuleSet defaults();           // marking-LM stand-in
  static MockRuleSet prompter_defaults();  // shorter outputs, instruction-sized
};

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint_url;                     // http only
  std::string api_key_env = "WMFORGE_API_KEY";  // http only
  std::string model_id = "mock-lm";
  int concurrency_limit = 4;
  RetryPolicy retry;
  int timeout_ms = 60000;
  MockRuleSet mock_rules;           // mock only
  std::string replay_path;          // replay only
  bool replay_record = false;       // replay only: record mode forwards + persists
  BackendKind record_source = BackendKind::Http;  // backend used in record mode
};

/// Stable hash over (model_id, system_text, user_text, temperature,
/// max_tokens, seed) with canonical field ordering.
std::string request_fingerprint(const ChatRequest& request);

/// Dispatches to the configured backend. HTTP retries with exponential
/// backoff on transport errors and 429/5xx up to retry.max_attempts.
ChatResponse complete(const ChatRequest& request, const BackendConfig& config);

/// Deterministic rule-based generation; pure function of (request, rules).
ChatResponse mock_generate(const ChatRequest& request, const MockRuleSet& rules);

/// POST {endpoint_url}/chat/completions with a messages array. Internal to
/// complete(), exposed for targeted tests.
ChatResponse http_complete(const ChatRequest& request, const BackendConfig& config);

// Seed derivation used by the mock generator, exposed so tests can replay the
// exact RNG streams.
namespace mockdetail {
std::uint64_t content_seed(const ChatRequest& request, const MockRuleSet& rules);
std::uint64_t style_seed(const ChatRequest& request);
std::uint64_t wm_seed(const ChatRequest& request, const MockRuleSet& rules);
std::string style_key(const ChatRequest& request);
int response_length(const ChatRequest& request, const MockRuleSet& rules);
bool watermark_active(const ChatRequest& request);
}  // namespace mockdetail

}  // namespace wmforge

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wmforge/lm_backend.hpp"
#include "wmforge/prompting.hpp"
#include "wmforge/user_prompt.hpp"

namespace wmforge {

struct TemplatePattern {
  std::string id;
  std::string pattern;  // contains {topic}, optionally {topic2}
  int slot_count() const;
};

struct TopicCategory {
  std::string name;
  std::vector<std::string> topics;
};

struct TopicRegistry {
  std::vector<TopicCategory> categories;
  std::vector<TemplatePattern> templates;

  std::string fingerprint() const;

  /// Ten content domains with sample topics, plus a dozen question patterns
  /// for rendering prompts.
  static TopicRegistry builtin();
  static TopicRegistry load(const std::string& path);
};

/// One labeled response Y with full provenance. label 1 iff instruction set.
struct Sample {
  std::string prompt_id;
  std::string category;
  std::vector<std::string> topics;
  std::string template_id;
  std::string user_prompt_text;
  std::optional<std::string> instruction;  // full text, sentinel included
  std::optional<std::string> strategy;
  std::string response_text;
  int label = 0;
  std::string marking_backend_id;
  std::int64_t seed = 0;

  bool operator==(const Sample&) const = default;
};

struct Corpus {
  std::vector<Sample> samples;
  std::string registry_fingerprint;
  nlohmann::json generation_config;  // snapshot; not persisted in the JSONL

  std::size_t count_label(int label) const;
};

struct PairGenConfig {
  BackendConfig prompter;
  BackendConfig marker;
  PromptTemplateSet templates = PromptTemplateSet::builtin();
  Strategy strategy = Strategy::All;
};

UserPrompt sample_user_prompt(const TopicRegistry& registry, std::uint64_t rng_seed);

/// Synthesizes I, queries the Marking LM with and without it, and returns the
/// (watermarked, clean) pair sharing prompt_id. Atomic: any failure produces
/// no samples.
std::pair<Sample, Sample> generate_pair(const UserPrompt& user_prompt,
                                        const PairGenConfig& config,
                                        std::int64_t pair_seed);

/// Emits exactly 2*n_prompts samples, balanced and pair-ordered (watermarked
/// first). Failed pairs are retried 3x then skipped; >10% failures aborts.
Corpus build_corpus(int n_prompts, const TopicRegistry& registry,
                    const PairGenConfig& config, std::uint64_t rng_seed,
                    int* skipped_pairs = nullptr);

/// Pair-level split: both samples of a prompt land on the same side, so both
/// sides stay exactly balanced.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                std::uint64_t rng_seed);

void write_jsonl(const Corpus& corpus, const std::string& path);
Corpus read_jsonl(const std::string& path);

nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j);

}  // namespace wmforge

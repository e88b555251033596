#pragma once

#include <map>
#include <optional>
#include <string>

#include "wmforge/lm_backend.hpp"
#include "wmforge/user_prompt.hpp"

namespace wmforge {

enum class Strategy { All, Semantic, Lexical, Structural };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

/// A watermarking system instruction I. `text` carries the watermark sentinel
/// exactly once; use display_text() for anything human-facing.
struct Instruction {
  std::string text;
  Strategy strategy = Strategy::All;
  std::string source_prompt_id;
  std::string prompter_backend_id;

  std::string display_text() const;  // sentinel stripped, trimmed
};

/// The fixed instruction-synthesis prompt plus the three perturbed variants.
/// Each template has exactly one {user_prompt} slot. The shipped wordings are
/// a starting point; operators can edit the data files.
struct PromptTemplateSet {
  std::string fixed_template;                       // strategy "all"
  std::map<Strategy, std::string> strategy_variants;  // semantic/lexical/structural

  const std::string& for_strategy(Strategy s) const;

  static PromptTemplateSet builtin();
  /// Loads all.txt, semantic.txt, lexical.txt, structural.txt from a directory.
  static PromptTemplateSet load_dir(const std::string& dir);
};

/// Fills the strategy's template with the user prompt text.
ChatRequest build_prompter_input(const UserPrompt& user_prompt, Strategy strategy,
                                 const PromptTemplateSet& templates);

/// Drives the Prompting LM and wraps its output as a sentinel-bearing
/// Instruction. Empty LM output is an error.
Instruction synthesize_instruction(const UserPrompt& user_prompt, Strategy strategy,
                                   const BackendConfig& prompter,
                                   const PromptTemplateSet& templates,
                                   std::optional<std::int64_t> seed = std::nullopt);

/// The watermark toggle: with an instruction the Marking LM sees C = [X; I],
/// without it only X.
ChatRequest compose_marking_input(const UserPrompt& user_prompt,
                                  const std::optional<Instruction>& instruction,
                                  std::optional<std::int64_t> seed = std::nullopt);

}  // namespace wmforge

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wmforge/dataset.hpp"
#include "wmforge/detector.hpp"

namespace wmforge {

enum class AttackMode { ResponseAppend, PromptInject };

const char* attack_mode_name(AttackMode m);
AttackMode attack_mode_from_name(const std::string& name);

struct AttackSpec {
  std::string id;
  std::string text;
  AttackMode mode = AttackMode::ResponseAppend;
};

/// The three built-in attack strings, default mode response_append.
std::vector<AttackSpec> builtin_attacks();

/// response_append: response <- response + " " + attack text (bytewise).
/// prompt_inject: requires a marking backend; the user prompt is extended
/// with the attack text and the Marking LM re-queried with the sample's
/// original instruction. Ground-truth labels are never changed.
Sample apply_attack(const Sample& sample, const AttackSpec& attack,
                    const BackendConfig* marker = nullptr);

struct AttackResult {
  std::string attack_id;
  std::string mode;
  double accuracy = 0.0;  // fraction still classified watermarked
  long n = 0;
};

std::vector<AttackResult> attack_eval(const DetectorModel& model,
                                      const std::vector<Sample>& watermarked_test,
                                      const std::vector<AttackSpec>& attacks,
                                      const BackendConfig* marker = nullptr);

void write_attack_results_jsonl(const std::vector<AttackResult>& results,
                                const std::string& path);

}  // namespace wmforge

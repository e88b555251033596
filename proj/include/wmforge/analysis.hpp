#pragma once

#include <string>
#include <vector>

#include "wmforge/lm_backend.hpp"
#include "wmforge/prompting.hpp"
#include "wmforge/user_prompt.hpp"

namespace wmforge {

struct DivergenceReport {
  std::string kind;  // "exact" or "unigram_proxy"
  double value = 0.0;  // nats
  int n_prompts = 0;
  std::string backend_id;
  double smoothing_alpha = 0.0;  // proxy only
};

/// KL(p || q) in nats over the union support. Terms with p(x)=0 contribute 0;
/// p(x)>0 with q(x)=0 yields +infinity (configure the mock with
/// support_floor > 0 to guarantee shared support).
double kl_divergence(const StepDistribution& p, const StepDistribution& q);

/// Exact per-step KL between the conditioned and unconditioned mock output
/// distributions, summed over the conditioned trajectory's steps and
/// averaged over prompts. Instructions align with prompts by index.
DivergenceReport exact_divergence(const std::vector<UserPrompt>& prompts,
                                  const std::vector<Instruction>& instructions,
                                  const BackendConfig& mock_config,
                                  std::int64_t seed = 0);

/// Black-box surrogate: KL between add-alpha-smoothed unigram distributions
/// fitted on the two corpora over their union vocabulary.
DivergenceReport unigram_proxy_divergence(const std::vector<std::string>& with_instruction,
                                          const std::vector<std::string>& without,
                                          double alpha = 0.5);

}  // namespace wmforge

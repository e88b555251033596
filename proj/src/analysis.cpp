#include "wmforge/analysis.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "wmforge/detector.hpp"
#include "wmforge/error.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

double kl_divergence(const StepDistribution& p, const StepDistribution& q) {
  double kl = 0.0;
  for (const auto& [token, pp] : p) {
    if (pp <= 0.0) continue;
    auto it = q.find(token);
    const double qq = it == q.end() ? 0.0 : it->second;
    if (qq <= 0.0) return std::numeric_limits<double>::infinity();
    kl += pp * std::log(pp / qq);
  }
  return std::max(kl, 0.0);  // clamp tiny negative rounding
}

DivergenceReport exact_divergence(const std::vector<UserPrompt>& prompts,
                                  const std::vector<Instruction>& instructions,
                                  const BackendConfig& mock_config, std::int64_t seed) {
  if (mock_config.kind != BackendKind::Mock)
    fail(Errc::NotMock, "exact divergence needs per-step distributions (mock backend only)");
  if (prompts.empty()) fail(Errc::Empty, "no prompts");
  if (prompts.size() != instructions.size())
    fail(Errc::LengthMismatch, "prompts and instructions must align");

  double total = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto req_seed = static_cast<std::int64_t>(
        mix64(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(i)));
    const ChatRequest cond_req = compose_marking_input(prompts[i], instructions[i], req_seed);
    const ChatRequest clean_req = compose_marking_input(prompts[i], std::nullopt, req_seed);

    const ChatResponse cond = complete(cond_req, mock_config);
    const ChatResponse clean = complete(clean_req, mock_config);
    if (!cond.token_distributions || !clean.token_distributions)
      fail(Errc::NotMock, "backend did not expose token distributions");

    const auto& cd = *cond.token_distributions;
    const auto& ud = *clean.token_distributions;
    const std::size_t steps = std::min(cd.size(), ud.size());
    double seq_kl = 0.0;
    for (std::size_t t = 0; t < steps; ++t) seq_kl += kl_divergence(cd[t], ud[t]);
    total += seq_kl;
  }

  DivergenceReport report;
  report.kind = "exact";
  report.value = total / static_cast<double>(prompts.size());
  report.n_prompts = static_cast<int>(prompts.size());
  report.backend_id = mock_config.model_id;
  return report;
}

DivergenceReport unigram_proxy_divergence(const std::vector<std::string>& with_instruction,
                                          const std::vector<std::string>& without,
                                          double alpha) {
  if (with_instruction.empty() || without.empty())
    fail(Errc::Empty, "both corpora must be non-empty");
  if (alpha <= 0.0) fail(Errc::Config, "smoothing alpha must be > 0");

  std::map<std::string, double> cw, cu;
  double nw = 0.0, nu = 0.0;
  for (const auto& text : with_instruction)
    for (const auto& tok : tokenize(text)) {
      cw[tok] += 1.0;
      nw += 1.0;
    }
  for (const auto& text : without)
    for (const auto& tok : tokenize(text)) {
      cu[tok] += 1.0;
      nu += 1.0;
    }

  std::map<std::string, bool> vocab;
  for (const auto& [t, c] : cw) vocab[t] = true;
  for (const auto& [t, c] : cu) vocab[t] = true;
  const auto v = static_cast<double>(vocab.size());

  double kl = 0.0;
  for (const auto& [tok, unused] : vocab) {
    const double p = (cw.count(tok) ? cw[tok] : 0.0) + alpha;
    const double q = (cu.count(tok) ? cu[tok] : 0.0) + alpha;
    const double pn = p / (nw + alpha * v);
    const double qn = q / (nu + alpha * v);
    kl += pn * std::log(pn / qn);
  }

  DivergenceReport report;
  report.kind = "unigram_proxy";
  report.value = std::max(kl, 0.0);
  report.n_prompts = static_cast<int>(with_instruction.size());
  report.smoothing_alpha = alpha;
  return report;
}

}  // namespace wmforge

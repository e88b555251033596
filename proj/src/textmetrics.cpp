#include "wmforge/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "wmforge/detector.hpp"
#include "wmforge/error.hpp"

namespace wmforge {

using nlohmann::json;

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::Bleu: return "bleu";
    case Metric::RougeL: return "rouge_l";
    case Metric::Levenshtein: return "levenshtein";
    case Metric::TfidfCosine: return "tfidf_cosine";
  }
  return "unknown";
}

Metric metric_from_name(const std::string& name) {
  if (name == "bleu") return Metric::Bleu;
  if (name == "rouge_l") return Metric::RougeL;
  if (name == "levenshtein") return Metric::Levenshtein;
  if (name == "tfidf_cosine") return Metric::TfidfCosine;
  fail(Errc::Config, "unknown metric '" + name + "'");
}

namespace {

std::map<std::string, long> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, long> counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
    std::string gram = tokens[start];
    for (int k = 1; k < n; ++k) {
      gram.push_back(' ');
      gram += tokens[start + k];
    }
    ++counts[gram];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<std::string>& candidate_tokens,
            const std::vector<std::string>& reference_tokens, int max_n) {
  if (candidate_tokens.empty()) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate_tokens, n);
    const auto ref = ngram_counts(reference_tokens, n);
    long total = 0, matched = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);  // clipped
    }
    // add-one smoothing on numerator and denominator
    const double p_n = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    log_sum += std::log(p_n);
  }
  double score = std::exp(log_sum / max_n);

  const auto cand_len = static_cast<double>(candidate_tokens.size());
  const auto ref_len = static_cast<double>(reference_tokens.size());
  if (cand_len < ref_len) score *= std::exp(1.0 - ref_len / cand_len);
  return std::clamp(score, 0.0, 1.0);
}

double rouge_l(const std::vector<std::string>& candidate_tokens,
               const std::vector<std::string>& reference_tokens) {
  if (candidate_tokens.empty() || reference_tokens.empty()) return 0.0;

  const std::size_t m = candidate_tokens.size(), n = reference_tokens.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate_tokens[i - 1] == reference_tokens[j - 1]
                   ? prev[j - 1] + 1
                   : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[n]);
  const double precision = lcs / static_cast<double>(m);
  const double recall = lcs / static_cast<double>(n);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t levenshtein_distance(const std::string& a, const std::string& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

double levenshtein_similarity(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 1.0;
  const auto d = static_cast<double>(levenshtein_distance(a, b));
  return 1.0 - d / static_cast<double>(std::max(a.size(), b.size()));
}

namespace {

double sparse_dot(const SparseVec& va, const SparseVec& vb) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < va.size() && j < vb.size()) {
    if (va[i].first == vb[j].first)
      dot += va[i++].second * vb[j++].second;
    else if (va[i].first < vb[j].first)
      ++i;
    else
      ++j;
  }
  return std::clamp(dot, 0.0, 1.0);  // inputs are unit norm (or zero)
}

// Tokenizations and tf-idf vectors cached once per group comparison.
struct PairScorer {
  Metric metric;
  const std::vector<std::string>& texts;
  std::vector<std::vector<std::string>> tokens;
  std::vector<SparseVec> vectors;  // tfidf_cosine only

  PairScorer(Metric m, const std::vector<std::string>& all_texts,
             const std::vector<std::string>& context)
      : metric(m), texts(all_texts) {
    if (metric == Metric::Bleu || metric == Metric::RougeL) {
      tokens.reserve(texts.size());
      for (const auto& t : texts) tokens.push_back(tokenize(t));
    } else if (metric == Metric::TfidfCosine) {
      if (context.empty())
        fail(Errc::EmptyContext, "tfidf_cosine requires context documents");
      const Vocabulary vocab = fit_vocabulary(context, 1 << 30, /*min_df=*/1, /*max_n=*/1);
      vectors.reserve(texts.size());
      for (const auto& t : texts) vectors.push_back(featurize(t, vocab));
    }
  }

  double score(std::size_t a, std::size_t b, bool symmetrize) const {
    switch (metric) {
      case Metric::Bleu:
        return symmetrize ? 0.5 * (bleu(tokens[a], tokens[b]) + bleu(tokens[b], tokens[a]))
                          : bleu(tokens[a], tokens[b]);
      case Metric::RougeL:
        return symmetrize
                   ? 0.5 * (rouge_l(tokens[a], tokens[b]) + rouge_l(tokens[b], tokens[a]))
                   : rouge_l(tokens[a], tokens[b]);
      case Metric::Levenshtein:
        return levenshtein_similarity(texts[a], texts[b]);
      case Metric::TfidfCosine:
        return sparse_dot(vectors[a], vectors[b]);
    }
    return 0.0;
  }
};

double mean_of(const std::vector<PairScore>& scores) {
  double sum = 0.0;
  for (const auto& p : scores) sum += p.score;
  return scores.empty() ? 0.0 : sum / static_cast<double>(scores.size());
}

}  // namespace

double tfidf_cosine(const std::string& a, const std::string& b,
                    const std::vector<std::string>& context_docs) {
  if (context_docs.empty()) fail(Errc::EmptyContext, "tfidf_cosine requires context documents");
  const Vocabulary vocab = fit_vocabulary(context_docs, 1 << 30, /*min_df=*/1, /*max_n=*/1);
  return sparse_dot(featurize(a, vocab), featurize(b, vocab));
}

SimilarityReport inter_group_similarity(const std::vector<std::string>& originals,
                                        const std::vector<std::string>& variants,
                                        Metric metric) {
  if (originals.size() != variants.size())
    fail(Errc::LengthMismatch, "inter-group comparison needs aligned groups (" +
                                   std::to_string(originals.size()) + " vs " +
                                   std::to_string(variants.size()) + ")");
  std::vector<std::string> all = variants;  // candidates first, then references
  all.insert(all.end(), originals.begin(), originals.end());
  const PairScorer scorer(metric, all, all);

  SimilarityReport report;
  report.metric = metric;
  report.group_kind = "inter";
  const std::size_t n = originals.size();
  for (std::size_t i = 0; i < n; ++i) {
    // candidate = variant, reference = original
    const double s = scorer.score(i, n + i, false);
    report.pair_scores.push_back({"o" + std::to_string(i), "v" + std::to_string(i), s});
  }
  report.mean = mean_of(report.pair_scores);
  return report;
}

SimilarityReport intra_group_similarity(const std::vector<std::string>& group,
                                        Metric metric) {
  if (group.size() < 2)
    fail(Errc::TooSmall, "intra-group similarity needs at least 2 texts");

  const PairScorer scorer(metric, group, group);
  SimilarityReport report;
  report.metric = metric;
  report.group_kind = "intra";
  for (std::size_t i = 0; i < group.size(); ++i)
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      const double s = scorer.score(i, j, true);
      report.pair_scores.push_back(
          {"g" + std::to_string(i), "g" + std::to_string(j), s});
    }
  report.mean = mean_of(report.pair_scores);
  return report;
}

void write_report_jsonl(const SimilarityReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot open for writing: " + path);
  for (const auto& p : report.pair_scores) {
    json j = {{"a_id", p.a_id}, {"b_id", p.b_id}, {"score", p.score}};
    out << j.dump() << '\n';
  }
  json summary = {{"metric", metric_name(report.metric)},
                  {"group_kind", report.group_kind},
                  {"mean", report.mean},
                  {"n_pairs", report.pair_scores.size()}};
  out << summary.dump() << '\n';
  if (!out) fail(Errc::Io, "write failed: " + path);
}

}  // namespace wmforge

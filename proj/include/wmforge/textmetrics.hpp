#pragma once

#include <string>
#include <vector>

namespace wmforge {

enum class Metric { Bleu, RougeL, Levenshtein, TfidfCosine };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

/// Sentence BLEU with add-one smoothing on every n-gram precision
/// (numerator and denominator) and the standard brevity penalty.
double bleu(const std::vector<std::string>& candidate_tokens,
            const std::vector<std::string>& reference_tokens, int max_n = 4);

/// LCS-based F1.
double rouge_l(const std::vector<std::string>& candidate_tokens,
               const std::vector<std::string>& reference_tokens);

std::size_t levenshtein_distance(const std::string& a, const std::string& b);

/// 1 - d / max(|a|,|b|); both empty -> 1.
double levenshtein_similarity(const std::string& a, const std::string& b);

/// Cosine of smoothed-idf tf-idf unigram vectors, idf fitted on context_docs
/// (which must include a and b's group).
double tfidf_cosine(const std::string& a, const std::string& b,
                    const std::vector<std::string>& context_docs);

struct PairScore {
  std::string a_id;
  std::string b_id;
  double score = 0.0;
};

struct SimilarityReport {
  Metric metric = Metric::Bleu;
  std::string group_kind;  // "inter" or "intra"
  std::vector<PairScore> pair_scores;
  double mean = 0.0;
};

/// Index-aligned original-vs-variant pairs (same source prompt).
SimilarityReport inter_group_similarity(const std::vector<std::string>& originals,
                                        const std::vector<std::string>& variants,
                                        Metric metric);

/// All unordered pairs within one group; asymmetric metrics (bleu, rouge_l)
/// are direction-averaged so the report is order-invariant.
SimilarityReport intra_group_similarity(const std::vector<std::string>& group,
                                        Metric metric);

/// One pair per line plus a trailing summary record.
void write_report_jsonl(const SimilarityReport& report, const std::string& path);

}  // namespace wmforge

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wmforge/dataset.hpp"

namespace wmforge {

/// Lowercase, split on whitespace, strip leading/trailing punctuation.
std::vector<std::string> tokenize(const std::string& text);

/// Dense-indexed word n-gram vocabulary with smoothed idf:
///   idf(t) = ln((1+N)/(1+df(t))) + 1
struct Vocabulary {
  std::vector<std::string> terms;  // index -> term
  std::vector<double> idf;         // index -> idf
  std::unordered_map<std::string, int> index;
  int max_n = 2;

  std::size_t size() const { return terms.size(); }
};

Vocabulary fit_vocabulary(const std::vector<std::string>& corpus_texts,
                          int max_features = 20000, int min_df = 2, int max_n = 2);

/// Sparse vector sorted by feature index.
using SparseVec = std::vector<std::pair<int, double>>;

SparseVec featurize(const std::string& text, const Vocabulary& vocab);      // L2-normalized
SparseVec featurize_raw(const std::string& text, const Vocabulary& vocab);  // tf*idf

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct DetectorModel {
  Vocabulary vocab;
  std::vector<double> weights;
  double bias = 0.0;
  TrainConfig train_config;
  double threshold = 0.5;
};

struct TrainResult {
  DetectorModel model;
  std::vector<double> epoch_losses;  // full-train loss after each epoch
  double initial_loss = 0.0;         // full-train loss at zero init (= ln 2 when balanced)
  double final_loss = 0.0;
};

/// Seeded shuffled mini-batch gradient descent on
///   L = -(1/N) sum[y ln p + (1-y) ln(1-p)] + l2 * ||w||^2
/// from zero initialization.
TrainResult train(const Corpus& train_corpus, const TrainConfig& config);

double logit(const DetectorModel& model, const std::string& text);
double predict(const DetectorModel& model, const std::string& text);  // sigmoid(logit)

/// Per-token watermark scores from exact logit decomposition: each active
/// feature's contribution is attributed equally across the token positions
/// of each of its occurrences, so sum(scores) + bias == logit.
struct TokenScoreTrace {
  std::vector<std::string> tokens;
  std::vector<double> scores;
  double total = 0.0;  // realized S_wm for this text
};

TokenScoreTrace token_scores(const DetectorModel& model, const std::string& text);

struct EvalReport {
  double accuracy = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double precision_wm = 0.0, recall_wm = 0.0;
  double precision_clean = 0.0, recall_clean = 0.0;
  long n_samples = 0;
};

/// Thresholded predictions vs labels; probability == threshold classifies as
/// watermarked.
EvalReport evaluate(const DetectorModel& model, const Corpus& test_corpus);

void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_model(const std::string& path);

// Loss/gradient on featurized data, exposed for finite-difference checks.
double full_loss(const std::vector<SparseVec>& xs, const std::vector<int>& ys,
                 const std::vector<double>& weights, double bias, double l2);
void full_gradient(const std::vector<SparseVec>& xs, const std::vector<int>& ys,
                   const std::vector<double>& weights, double bias, double l2,
                   std::vector<double>& grad_w, double& grad_b);

}  // namespace wmforge

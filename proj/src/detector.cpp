#include "wmforge/detector.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "wmforge/error.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    // strip leading/trailing punctuation
    std::size_t b = 0, e = cur.size();
    auto is_punct = [](unsigned char c) { return std::ispunct(c) != 0; };
    while (b < e && is_punct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && is_punct(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) tokens.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c) || c == 0xA0) {
      flush();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  flush();
  return tokens;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// All n-grams (n in [1, max_n]) of a token sequence, joined by spaces.
void for_each_ngram(const std::vector<std::string>& tokens, int max_n,
                    const std::function<void(const std::string&, std::size_t, int)>& fn) {
  for (int n = 1; n <= max_n; ++n) {
    if (tokens.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
      std::string gram = tokens[start];
      for (int k = 1; k < n; ++k) {
        gram.push_back(' ');
        gram += tokens[start + k];
      }
      fn(gram, start, n);
    }
  }
}

}  // namespace

Vocabulary fit_vocabulary(const std::vector<std::string>& corpus_texts, int max_features,
                          int min_df, int max_n) {
  bool any_nonempty = false;
  std::map<std::string, long> df;  // ordered: lexicographic tie-break for free
  long n_docs = 0;
  for (const auto& text : corpus_texts) {
    ++n_docs;
    const auto tokens = tokenize(text);
    if (!tokens.empty()) any_nonempty = true;
    std::map<std::string, bool> seen;
    for_each_ngram(tokens, max_n, [&](const std::string& gram, std::size_t, int) {
      if (!seen.count(gram)) {
        seen[gram] = true;
        ++df[gram];
      }
    });
  }
  if (n_docs == 0 || !any_nonempty)
    fail(Errc::EmptyCorpus, "vocabulary fit requires at least one non-empty document");

  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [gram, count] : df)
    if (count >= min_df) kept.emplace_back(gram, count);

  // Top max_features by document frequency, ties lexicographically ascending.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > static_cast<std::size_t>(max_features)) kept.resize(max_features);
  std::sort(kept.begin(), kept.end());  // stable final index order

  Vocabulary vocab;
  vocab.max_n = max_n;
  vocab.terms.reserve(kept.size());
  vocab.idf.reserve(kept.size());
  for (const auto& [gram, count] : kept) {
    vocab.index[gram] = static_cast<int>(vocab.terms.size());
    vocab.terms.push_back(gram);
    vocab.idf.push_back(std::log((1.0 + n_docs) / (1.0 + count)) + 1.0);
  }
  return vocab;
}

SparseVec featurize_raw(const std::string& text, const Vocabulary& vocab) {
  std::map<int, double> tf;
  const auto tokens = tokenize(text);
  for_each_ngram(tokens, vocab.max_n, [&](const std::string& gram, std::size_t, int) {
    auto it = vocab.index.find(gram);
    if (it != vocab.index.end()) tf[it->second] += 1.0;
  });
  SparseVec vec;
  vec.reserve(tf.size());
  for (const auto& [idx, count] : tf) vec.emplace_back(idx, count * vocab.idf[idx]);
  return vec;
}

SparseVec featurize(const std::string& text, const Vocabulary& vocab) {
  SparseVec vec = featurize_raw(text, vocab);
  double norm_sq = 0.0;
  for (const auto& [idx, v] : vec) norm_sq += v * v;
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& [idx, v] : vec) v *= inv;
  }
  return vec;
}

double full_loss(const std::vector<SparseVec>& xs, const std::vector<int>& ys,
                 const std::vector<double>& weights, double bias, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = bias;
    for (const auto& [idx, v] : xs[i]) z += weights[idx] * v;
    // numerically stable BCE: log(1+e^-|z|) + max(z,0) - y*z
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - ys[i] * z;
  }
  loss /= static_cast<double>(xs.size());
  double reg = 0.0;
  for (double w : weights) reg += w * w;
  return loss + l2 * reg;
}

void full_gradient(const std::vector<SparseVec>& xs, const std::vector<int>& ys,
                   const std::vector<double>& weights, double bias, double l2,
                   std::vector<double>& grad_w, double& grad_b) {
  grad_w.assign(weights.size(), 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double z = bias;
    for (const auto& [idx, v] : xs[i]) z += weights[idx] * v;
    const double err = sigmoid(z) - ys[i];
    for (const auto& [idx, v] : xs[i]) grad_w[idx] += err * v;
    grad_b += err;
  }
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  for (std::size_t j = 0; j < grad_w.size(); ++j)
    grad_w[j] = grad_w[j] * inv_n + 2.0 * l2 * weights[j];
  grad_b *= inv_n;
}

TrainResult train(const Corpus& train_corpus, const TrainConfig& config) {
  const std::size_t n = train_corpus.samples.size();
  if (n == 0) fail(Errc::EmptyCorpus, "training corpus is empty");
  const std::size_t n_pos = train_corpus.count_label(1);
  if (n_pos == 0 || n_pos == n)
    fail(Errc::SingleClass, "training corpus must contain both labels");

  std::vector<std::string> texts;
  texts.reserve(n);
  for (const auto& s : train_corpus.samples) texts.push_back(s.response_text);
  Vocabulary vocab = fit_vocabulary(texts, 20000, 2, 2);

  std::vector<SparseVec> xs;
  std::vector<int> ys;
  xs.reserve(n);
  ys.reserve(n);
  for (const auto& s : train_corpus.samples) {
    xs.push_back(featurize(s.response_text, vocab));
    ys.push_back(s.label);
  }

  std::vector<double> w(vocab.size(), 0.0);
  double b = 0.0;

  TrainResult result;
  result.initial_loss = full_loss(xs, ys, w, b, config.l2);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(config.seed);

  const auto batch_size = static_cast<std::size_t>(std::max(1, config.batch_size));
  std::vector<double> gw(vocab.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng.below(i + 1);
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(start + batch_size, n);
      const double inv_b = 1.0 / static_cast<double>(end - start);

      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        double z = b;
        for (const auto& [idx, v] : xs[i]) z += w[idx] * v;
        const double err = sigmoid(z) - ys[i];
        for (const auto& [idx, v] : xs[i]) gw[idx] += err * v;
        gb += err;
      }
      for (std::size_t j = 0; j < w.size(); ++j)
        w[j] -= config.learning_rate * (gw[j] * inv_b + 2.0 * config.l2 * w[j]);
      b -= config.learning_rate * gb * inv_b;
    }
    const double epoch_loss = full_loss(xs, ys, w, b, config.l2);
    if (!std::isfinite(epoch_loss))
      fail(Errc::Diverged, "non-finite loss at epoch " + std::to_string(epoch + 1));
    result.epoch_losses.push_back(epoch_loss);
  }

  result.final_loss = result.epoch_losses.back();
  result.model.vocab = std::move(vocab);
  result.model.weights = std::move(w);
  result.model.bias = b;
  result.model.train_config = config;
  return result;
}

double logit(const DetectorModel& model, const std::string& text) {
  double z = model.bias;
  for (const auto& [idx, v] : featurize(text, model.vocab)) z += model.weights[idx] * v;
  return z;
}

double predict(const DetectorModel& model, const std::string& text) {
  return sigmoid(logit(model, text));
}

TokenScoreTrace token_scores(const DetectorModel& model, const std::string& text) {
  TokenScoreTrace trace;
  trace.tokens = tokenize(text);
  trace.scores.assign(trace.tokens.size(), 0.0);

  const SparseVec x = featurize(text, model.vocab);
  std::unordered_map<int, double> value;
  for (const auto& [idx, v] : x) value[idx] = v;

  // Occurrence positions per active feature.
  std::unordered_map<int, std::vector<std::pair<std::size_t, int>>> occs;
  for_each_ngram(trace.tokens, model.vocab.max_n,
                 [&](const std::string& gram, std::size_t start, int n) {
                   auto it = model.vocab.index.find(gram);
                   if (it != model.vocab.index.end() && value.count(it->second))
                     occs[it->second].emplace_back(start, n);
                 });

  for (const auto& [idx, positions] : occs) {
    const double contribution = model.weights[idx] * value[idx];
    std::size_t slots = 0;
    for (const auto& [start, n] : positions) slots += static_cast<std::size_t>(n);
    const double share = contribution / static_cast<double>(slots);
    for (const auto& [start, n] : positions)
      for (int k = 0; k < n; ++k) trace.scores[start + k] += share;
  }

  double total = 0.0;
  for (double s : trace.scores) total += s;
  trace.total = total;
  return trace;
}

EvalReport evaluate(const DetectorModel& model, const Corpus& test_corpus) {
  if (test_corpus.samples.empty()) fail(Errc::Empty, "test corpus is empty");
  EvalReport r;
  for (const auto& s : test_corpus.samples) {
    const bool predicted_wm = predict(model, s.response_text) >= model.threshold;
    if (s.label == 1)
      predicted_wm ? ++r.tp : ++r.fn;
    else
      predicted_wm ? ++r.fp : ++r.tn;
  }
  r.n_samples = static_cast<long>(test_corpus.samples.size());
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n_samples);
  r.precision_wm = (r.tp + r.fp) ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  r.recall_wm = (r.tp + r.fn) ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  r.precision_clean = (r.tn + r.fn) ? static_cast<double>(r.tn) / (r.tn + r.fn) : 0.0;
  r.recall_clean = (r.tn + r.fp) ? static_cast<double>(r.tn) / (r.tn + r.fp) : 0.0;
  return r;
}

namespace {
constexpr int kModelSchemaVersion = 1;
}

void save_model(const DetectorModel& model, const std::string& path) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  json terms = json::array();
  for (std::size_t i = 0; i < model.vocab.terms.size(); ++i)
    terms.push_back({{"term", model.vocab.terms[i]},
                     {"index", i},
                     {"idf", model.vocab.idf[i]}});
  j["vocabulary"] = {{"terms", terms}, {"max_n", model.vocab.max_n}};
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["threshold"] = model.threshold;
  j["train_config"] = {{"epochs", model.train_config.epochs},
                       {"learning_rate", model.train_config.learning_rate},
                       {"l2", model.train_config.l2},
                       {"batch_size", model.train_config.batch_size},
                       {"seed", model.train_config.seed}};
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot open for writing: " + path);
  out << j.dump() << '\n';
  if (!out) fail(Errc::Io, "write failed: " + path);
}

DetectorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open for reading: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(Errc::VersionMismatch, path + ": not a model file: " + e.what());
  }
  try {
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kModelSchemaVersion)
      fail(Errc::VersionMismatch, path + ": unsupported model schema version");
    DetectorModel m;
    m.vocab.max_n = j.at("vocabulary").at("max_n").get<int>();
    const auto& terms = j.at("vocabulary").at("terms");
    m.vocab.terms.resize(terms.size());
    m.vocab.idf.resize(terms.size());
    for (const auto& t : terms) {
      const auto idx = t.at("index").get<std::size_t>();
      m.vocab.terms.at(idx) = t.at("term").get<std::string>();
      m.vocab.idf.at(idx) = t.at("idf").get<double>();
      m.vocab.index[m.vocab.terms.at(idx)] = static_cast<int>(idx);
    }
    m.weights = j.at("weights").get<std::vector<double>>();
    if (m.weights.size() != m.vocab.terms.size())
      fail(Errc::VersionMismatch, path + ": weight/vocabulary size mismatch");
    m.bias = j.at("bias").get<double>();
    m.threshold = j.at("threshold").get<double>();
    const auto& tc = j.at("train_config");
    m.train_config.epochs = tc.at("epochs").get<int>();
    m.train_config.learning_rate = tc.at("learning_rate").get<double>();
    m.train_config.l2 = tc.at("l2").get<double>();
    m.train_config.batch_size = tc.at("batch_size").get<int>();
    m.train_config.seed = tc.at("seed").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    fail(Errc::VersionMismatch, path + ": malformed model file: " + e.what());
  }
}

}  // namespace wmforge

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wmforge/dataset.hpp"
#include "wmforge/error.hpp"

using namespace wmforge;
namespace fs = std::filesystem;

namespace {

PairGenConfig mock_pair_config() {
  PairGenConfig cfg;
  cfg.prompter.kind = BackendKind::Mock;
  cfg.prompter.mock_rules = MockRuleSet::prompter_defaults();
  cfg.prompter.model_id = "mock-prompter";
  cfg.marker.kind = BackendKind::Mock;
  cfg.marker.mock_rules = MockRuleSet::defaults();
  cfg.marker.model_id = "mock-marker";
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("wmforge_dataset_" + name);
}

int marked_count(const std::string& text, const MockRuleSet& rules) {
  std::istringstream is(text);
  std::string w;
  int n = 0;
  while (is >> w)
    for (const auto& m : rules.marked_vocabulary)
      if (w == m) ++n;
  return n;
}

}  // namespace

TEST_CASE("built-in registry has the ten domains and slotted templates") {
  const auto registry = TopicRegistry::builtin();
  CHECK(registry.categories.size() == 10);
  for (const auto& c : registry.categories) {
    CHECK_FALSE(c.name.empty());
    CHECK(c.topics.size() >= 2);
  }
  CHECK_FALSE(registry.templates.empty());
  for (const auto& t : registry.templates) CHECK(t.slot_count() >= 1);
}

TEST_CASE("shipped registry file matches the built-in registry") {
  const auto loaded = TopicRegistry::load(std::string(WMFORGE_TEST_DATA_DIR) + "/registry.json");
  CHECK(loaded.fingerprint() == TopicRegistry::builtin().fingerprint());
}

TEST_CASE("a one-choice registry renders its unique prompt") {
  TopicRegistry r;
  r.categories = {{"Science", {"gravity"}}};
  r.templates = {{"t1", "Explain {topic} briefly."}};
  const auto p = sample_user_prompt(r, 123);
  CHECK(p.text == "Explain gravity briefly.");
  CHECK(p.category == "Science");
  CHECK(p.template_id == "t1");
  REQUIRE(p.topics.size() == 1);
  CHECK(p.topics[0] == "gravity");
}

TEST_CASE("prompt sampling is deterministic under a fixed seed") {
  const auto registry = TopicRegistry::builtin();
  const auto a = sample_user_prompt(registry, 3);
  const auto b = sample_user_prompt(registry, 3);
  CHECK(a.id == b.id);
  CHECK(a.text == b.text);
  CHECK(a.topics == b.topics);
}

TEST_CASE("empty registry is rejected") {
  TopicRegistry r;
  try {
    sample_user_prompt(r, 0);
    FAIL("expected EmptyRegistry");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyRegistry);
  }
}

TEST_CASE("category draw is uniform within 3 sigma over 10000 draws") {
  const auto registry = TopicRegistry::builtin();
  REQUIRE(registry.categories.size() == 10);
  std::map<std::string, int> counts;
  for (int i = 0; i < 10000; ++i)
    ++counts[sample_user_prompt(registry, 1000003ull * i + 17).category];
  // Binomial per category: mean 1000, sigma = sqrt(10000 * 0.1 * 0.9) = 30.
  const double sigma = std::sqrt(10000 * 0.1 * 0.9);
  for (const auto& c : registry.categories) {
    const double dev = std::abs(counts[c.name] - 1000.0);
    CHECK(dev <= 3.0 * sigma);
  }
}

TEST_CASE("generate_pair returns an aligned watermarked/clean pair") {
  const auto registry = TopicRegistry::builtin();
  const auto cfg = mock_pair_config();
  const auto prompt = sample_user_prompt(registry, 99);
  const auto [wm, clean] = generate_pair(prompt, cfg, 42);
  CHECK(wm.prompt_id == clean.prompt_id);
  CHECK(wm.user_prompt_text == clean.user_prompt_text);
  CHECK(wm.label == 1);
  CHECK(clean.label == 0);
  CHECK(wm.instruction.has_value());
  CHECK_FALSE(clean.instruction.has_value());
  CHECK(wm.seed == clean.seed);  // same marker seed: the only toggle is the instruction
}

TEST_CASE("injection rate 1 marks every watermarked token and no clean token") {
  const auto registry = TopicRegistry::builtin();
  auto cfg = mock_pair_config();
  cfg.marker.mock_rules.injection_rate = 1.0;
  const auto prompt = sample_user_prompt(registry, 5);
  const auto [wm, clean] = generate_pair(prompt, cfg, 1);
  std::istringstream is(wm.response_text);
  std::string w;
  int total = 0;
  while (is >> w) ++total;
  CHECK(marked_count(wm.response_text, cfg.marker.mock_rules) == total);
  CHECK(marked_count(clean.response_text, cfg.marker.mock_rules) == 0);
}

TEST_CASE("build_corpus emits a balanced paired corpus") {
  const auto registry = TopicRegistry::builtin();
  const auto corpus = build_corpus(100, registry, mock_pair_config(), 7);
  CHECK(corpus.samples.size() == 200);
  CHECK(corpus.count_label(1) == 100);
  CHECK(corpus.count_label(0) == 100);

  std::map<std::string, std::set<int>> by_prompt;
  std::map<std::string, std::set<std::string>> texts;
  for (const auto& s : corpus.samples) {
    by_prompt[s.prompt_id].insert(s.label);
    texts[s.prompt_id].insert(s.user_prompt_text);
  }
  CHECK(by_prompt.size() == 100);
  for (const auto& [id, labels] : by_prompt) {
    CHECK(labels == std::set<int>{0, 1});  // exactly one sample per label
    CHECK(texts[id].size() == 1);          // identical prompt text across the pair
  }
}

TEST_CASE("build_corpus rejects non-positive n") {
  const auto registry = TopicRegistry::builtin();
  CHECK_THROWS_AS(build_corpus(0, registry, mock_pair_config(), 7), Error);
}

TEST_CASE("split is pair-aware, disjoint, exhaustive, balanced, deterministic") {
  const auto registry = TopicRegistry::builtin();
  const auto corpus = build_corpus(100, registry, mock_pair_config(), 7);
  const auto [train, test] = split(corpus, 0.8, 11);
  CHECK(train.samples.size() == 160);
  CHECK(test.samples.size() == 40);
  CHECK(train.count_label(1) == 80);
  CHECK(test.count_label(1) == 20);

  std::set<std::string> train_ids, test_ids;
  for (const auto& s : train.samples) train_ids.insert(s.prompt_id);
  for (const auto& s : test.samples) test_ids.insert(s.prompt_id);
  for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);
  CHECK(train_ids.size() + test_ids.size() == 100);

  const auto [train2, test2] = split(corpus, 0.8, 11);
  CHECK(train.samples == train2.samples);
  CHECK(test.samples == test2.samples);

  const auto [train3, test3] = split(corpus, 0.8, 12);
  CHECK(train.samples != train3.samples);  // seed actually drives membership
}

TEST_CASE("degenerate splits are rejected") {
  const auto registry = TopicRegistry::builtin();
  const auto corpus = build_corpus(2, registry, mock_pair_config(), 7);
  const auto one_pair = build_corpus(1, registry, mock_pair_config(), 7);
  CHECK_THROWS_AS(split(one_pair, 0.5, 1), Error);  // empty train side
  CHECK_THROWS_AS(split(corpus, 0.0, 1), Error);
  CHECK_THROWS_AS(split(corpus, 1.0, 1), Error);
}

TEST_CASE("jsonl round-trip reproduces the corpus exactly") {
  const auto registry = TopicRegistry::builtin();
  auto corpus = build_corpus(20, registry, mock_pair_config(), 3);
  corpus.samples[0].response_text += " naïve café 水元素 🙂";  // UTF-8 payload
  const auto path = temp_path("roundtrip.jsonl");
  write_jsonl(corpus, path.string());
  const auto loaded = read_jsonl(path.string());
  CHECK(loaded.samples == corpus.samples);
  fs::remove(path);
}

TEST_CASE("schema violations are reported with their line number") {
  const auto path = temp_path("bad.jsonl");
  {
    const auto registry = TopicRegistry::builtin();
    const auto corpus = build_corpus(2, registry, mock_pair_config(), 3);
    write_jsonl(corpus, path.string());
    // Corrupt line 3: drop the label field.
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    auto j = nlohmann::json::parse(lines[2]);
    j.erase("label");
    lines[2] = j.dump();
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
  }
  try {
    read_jsonl(path.string());
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SchemaViolation);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("labels outside {0,1} are schema violations") {
  auto j = sample_to_json(Sample{});
  j["label"] = 2;
  CHECK_THROWS_AS(sample_from_json(j), Error);
}

TEST_CASE("the mock pipeline is bytewise reproducible") {
  const auto registry = TopicRegistry::builtin();
  const auto cfg = mock_pair_config();
  const auto a_path = temp_path("repro_a.jsonl");
  const auto b_path = temp_path("repro_b.jsonl");
  write_jsonl(build_corpus(30, registry, cfg, 7), a_path.string());
  write_jsonl(build_corpus(30, registry, cfg, 7), b_path.string());
  CHECK(slurp(a_path) == slurp(b_path));
  fs::remove(a_path);
  fs::remove(b_path);
}

#include "wmforge/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "wmforge/error.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

using nlohmann::json;

int TemplatePattern::slot_count() const {
  int n = 0;
  if (pattern.find("{topic}") != std::string::npos) ++n;
  if (pattern.find("{topic2}") != std::string::npos) ++n;
  return n;
}

std::size_t Corpus::count_label(int label) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(),
                    [label](const Sample& s) { return s.label == label; }));
}

std::string TopicRegistry::fingerprint() const {
  std::string canon;
  for (const auto& c : categories) {
    canon += c.name;
    canon.push_back('\x1f');
    for (const auto& t : c.topics) {
      canon += t;
      canon.push_back('\x1e');
    }
  }
  for (const auto& t : templates) {
    canon += t.id;
    canon.push_back('\x1f');
    canon += t.pattern;
    canon.push_back('\x1e');
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

TopicRegistry TopicRegistry::builtin() {
  TopicRegistry r;
  r.categories = {
      {"Learning and Education", {"machine learning", "educational games"}},
      {"Science and Technology", {"robotics", "quantum computing"}},
      {"Creative Writing and Storytelling", {"fantasy worlds", "mystery plots"}},
      {"Philosophy and Ethics", {"moral relativism", "existentialism"}},
      {"Health and Wellness", {"mental health", "physical fitness"}},
      {"Environment and Nature", {"climate resilience", "pollution control"}},
      {"History and Culture", {"ancient civilizations", "world wars"}},
      {"Business and Economics", {"stock market", "digital currency"}},
      {"Personal Development and Motivation", {"time management", "goal setting"}},
      {"Fun and Hypothetical Scenarios", {"time travel", "alien encounters"}},
  };
  r.templates = {
      {"t01", "What is {topic}?"},
      {"t02", "Explain {topic} to a complete beginner."},
      {"t03", "Why does {topic} matter today?"},
      {"t04", "Describe the main challenges in {topic}."},
      {"t05", "Write a short overview of {topic} for a newsletter."},
      {"t06", "What are common misconceptions about {topic}?"},
      {"t07", "Give practical advice for someone getting started with {topic}."},
      {"t08", "How has {topic} changed over the last decade?"},
      {"t09", "How does {topic} relate to {topic2}?"},
      {"t10", "Compare {topic} and {topic2} in a few paragraphs."},
      {"t11", "What can {topic} teach us about {topic2}?"},
      {"t12", "Imagine a future shaped by {topic} and {topic2}. What does it look like?"},
  };
  return r;
}

TopicRegistry TopicRegistry::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot read registry file: " + path);
  json j;
  try {
    in >> j;
    TopicRegistry r;
    for (const auto& cj : j.at("categories")) {
      TopicCategory c;
      c.name = cj.at("name").get<std::string>();
      for (const auto& t : cj.at("topics")) c.topics.push_back(t.get<std::string>());
      r.categories.push_back(std::move(c));
    }
    for (const auto& tj : j.at("templates"))
      r.templates.push_back({tj.at("id").get<std::string>(),
                             tj.at("pattern").get<std::string>()});
    if (r.categories.empty() || r.templates.empty())
      fail(Errc::EmptyRegistry, "registry has no categories or no templates: " + path);
    return r;
  } catch (const json::exception& e) {
    fail(Errc::SchemaViolation, path + ": " + e.what());
  }
}

namespace {

std::string render_pattern(const TemplatePattern& tmpl,
                           const std::vector<std::string>& topics) {
  std::string out = tmpl.pattern;
  auto replace_all = [&out](const std::string& slot, const std::string& value) {
    std::size_t pos;
    while ((pos = out.find(slot)) != std::string::npos)
      out.replace(pos, slot.size(), value);
  };
  replace_all("{topic}", topics.at(0));
  if (topics.size() > 1) replace_all("{topic2}", topics.at(1));
  return out;
}

}  // namespace

UserPrompt sample_user_prompt(const TopicRegistry& registry, std::uint64_t rng_seed) {
  if (registry.categories.empty() || registry.templates.empty())
    fail(Errc::EmptyRegistry, "registry has no categories or no templates");

  Rng rng(rng_seed);
  const auto& category = registry.categories[rng.below(registry.categories.size())];
  if (category.topics.empty())
    fail(Errc::EmptyRegistry, "category '" + category.name + "' has no topics");

  std::size_t n_topics = 1 + rng.below(2);
  n_topics = std::min(n_topics, category.topics.size());

  std::vector<std::string> topics;
  std::size_t first = rng.below(category.topics.size());
  topics.push_back(category.topics[first]);
  if (n_topics == 2) {
    std::size_t second = rng.below(category.topics.size() - 1);
    if (second >= first) ++second;
    topics.push_back(category.topics[second]);
  }

  // Pick among templates whose slot count matches the topic draw; fall back
  // to single-topic templates when none do.
  std::vector<const TemplatePattern*> matching;
  for (const auto& t : registry.templates)
    if (static_cast<std::size_t>(t.slot_count()) == n_topics) matching.push_back(&t);
  if (matching.empty()) {
    topics.resize(1);
    for (const auto& t : registry.templates)
      if (t.slot_count() == 1) matching.push_back(&t);
  }
  if (matching.empty()) fail(Errc::EmptyRegistry, "no template with a {topic} slot");
  const TemplatePattern& tmpl = *matching[rng.below(matching.size())];

  UserPrompt p;
  char idbuf[24];
  std::snprintf(idbuf, sizeof idbuf, "p%016llx",
                static_cast<unsigned long long>(rng_seed));
  p.id = idbuf;
  p.category = category.name;
  p.topics = topics;
  p.template_id = tmpl.id;
  p.text = render_pattern(tmpl, topics);
  return p;
}

std::pair<Sample, Sample> generate_pair(const UserPrompt& user_prompt,
                                        const PairGenConfig& config,
                                        std::int64_t pair_seed) {
  const auto prompter_seed = static_cast<std::int64_t>(
      mix64(static_cast<std::uint64_t>(pair_seed), fnv1a64("prompter")));
  const auto marker_seed = static_cast<std::int64_t>(
      mix64(static_cast<std::uint64_t>(pair_seed), fnv1a64("marker")));

  const Instruction instr = synthesize_instruction(
      user_prompt, config.strategy, config.prompter, config.templates, prompter_seed);

  const ChatRequest wm_req = compose_marking_input(user_prompt, instr, marker_seed);
  const ChatRequest clean_req = compose_marking_input(user_prompt, std::nullopt, marker_seed);

  const ChatResponse wm_resp = complete(wm_req, config.marker);
  const ChatResponse clean_resp = complete(clean_req, config.marker);

  Sample wm;
  wm.prompt_id = user_prompt.id;
  wm.category = user_prompt.category;
  wm.topics = user_prompt.topics;
  wm.template_id = user_prompt.template_id;
  wm.user_prompt_text = user_prompt.text;
  wm.instruction = instr.text;
  wm.strategy = strategy_name(config.strategy);
  wm.response_text = wm_resp.text;
  wm.label = 1;
  wm.marking_backend_id = wm_resp.backend_id;
  wm.seed = marker_seed;

  Sample clean = wm;
  clean.instruction = std::nullopt;
  clean.strategy = std::nullopt;
  clean.response_text = clean_resp.text;
  clean.label = 0;

  return {wm, clean};
}

Corpus build_corpus(int n_prompts, const TopicRegistry& registry,
                    const PairGenConfig& config, std::uint64_t rng_seed,
                    int* skipped_pairs) {
  if (n_prompts < 1) fail(Errc::Config, "n_prompts must be >= 1");

  Corpus corpus;
  corpus.registry_fingerprint = registry.fingerprint();
  corpus.generation_config = {
      {"n_prompts", n_prompts},
      {"strategy", strategy_name(config.strategy)},
      {"seed", rng_seed},
      {"prompter", backend_kind_name(config.prompter.kind)},
      {"marker", backend_kind_name(config.marker.kind)},
  };

  int skipped = 0;
  for (int i = 0; i < n_prompts; ++i) {
    const std::uint64_t prompt_seed =
        mix64(rng_seed, mix64(static_cast<std::uint64_t>(i), fnv1a64("prompt")));
    const UserPrompt prompt = sample_user_prompt(registry, prompt_seed);

    bool done = false;
    for (int attempt = 0; attempt < 3 && !done; ++attempt) {
      try {
        auto [wm, clean] = generate_pair(
            prompt, config,
            static_cast<std::int64_t>(mix64(prompt_seed, static_cast<std::uint64_t>(attempt))));
        corpus.samples.push_back(std::move(wm));
        corpus.samples.push_back(std::move(clean));
        done = true;
      } catch (const Error&) {
        // retry; pair atomicity means nothing was appended
      }
    }
    if (!done) ++skipped;
    if (skipped * 10 > n_prompts)
      fail(Errc::TooManyFailures,
           std::to_string(skipped) + " of " + std::to_string(n_prompts) + " pairs failed");
  }
  if (skipped_pairs) *skipped_pairs = skipped;
  return corpus;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                std::uint64_t rng_seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    fail(Errc::Config, "train_fraction must lie in (0,1)");

  std::vector<std::string> pair_ids;
  std::unordered_set<std::string> seen;
  for (const auto& s : corpus.samples)
    if (seen.insert(s.prompt_id).second) pair_ids.push_back(s.prompt_id);

  const std::size_t n_pairs = pair_ids.size();
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n_pairs));
  if (n_train == 0 || n_train == n_pairs)
    fail(Errc::TooSmall, "split would leave one side empty (" + std::to_string(n_pairs) +
                             " pairs, fraction " + std::to_string(train_fraction) + ")");

  // Fisher-Yates with the portable RNG.
  Rng rng(rng_seed);
  for (std::size_t i = n_pairs - 1; i > 0; --i) {
    const std::size_t j = rng.below(i + 1);
    std::swap(pair_ids[i], pair_ids[j]);
  }

  const std::unordered_set<std::string> train_ids(pair_ids.begin(),
                                                  pair_ids.begin() + n_train);
  auto in_train = [&train_ids](const std::string& id) { return train_ids.count(id) > 0; };

  Corpus train, test;
  train.registry_fingerprint = test.registry_fingerprint = corpus.registry_fingerprint;
  train.generation_config = test.generation_config = corpus.generation_config;
  for (const auto& s : corpus.samples)
    (in_train(s.prompt_id) ? train : test).samples.push_back(s);
  return {train, test};
}

json sample_to_json(const Sample& s) {
  json j;
  j["prompt_id"] = s.prompt_id;
  j["category"] = s.category;
  j["topics"] = s.topics;
  j["template_id"] = s.template_id;
  j["user_prompt"] = s.user_prompt_text;
  j["instruction"] = s.instruction ? json(*s.instruction) : json(nullptr);
  j["strategy"] = s.strategy ? json(*s.strategy) : json(nullptr);
  j["response"] = s.response_text;
  j["label"] = s.label;
  j["backend"] = s.marking_backend_id;
  j["seed"] = s.seed;
  return j;
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.prompt_id = j.at("prompt_id").get<std::string>();
  s.category = j.at("category").get<std::string>();
  s.topics = j.at("topics").get<std::vector<std::string>>();
  s.template_id = j.at("template_id").get<std::string>();
  s.user_prompt_text = j.at("user_prompt").get<std::string>();
  if (!j.at("instruction").is_null()) s.instruction = j.at("instruction").get<std::string>();
  if (!j.at("strategy").is_null()) s.strategy = j.at("strategy").get<std::string>();
  s.response_text = j.at("response").get<std::string>();
  const auto& label = j.at("label");
  if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1))
    fail(Errc::SchemaViolation, "label must be 0 or 1");
  s.label = label.get<int>();
  s.marking_backend_id = j.at("backend").get<std::string>();
  s.seed = j.at("seed").get<std::int64_t>();
  return s;
}

void write_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot open for writing: " + path);
  for (const auto& s : corpus.samples) out << sample_to_json(s).dump() << '\n';
  if (!out) fail(Errc::Io, "write failed: " + path);
}

Corpus read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open for reading: " + path);
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      corpus.samples.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(Errc::SchemaViolation, path + " line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(Errc::SchemaViolation, path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace wmforge

// wmforge: prompt-guided watermarking pipeline driver.
//
// Subcommands: gen-dataset, train, evaluate, detect, attack, ablate, inspect.
// Exit codes: 0 success, 2 config/schema error, 3 backend failure,
// 4 training failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wmforge/analysis.hpp"
#include "wmforge/attacks.hpp"
#include "wmforge/dataset.hpp"
#include "wmforge/detector.hpp"
#include "wmforge/error.hpp"
#include "wmforge/lm_backend.hpp"
#include "wmforge/prompting.hpp"
#include "wmforge/rng.hpp"
#include "wmforge/textmetrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wmforge;

namespace {

constexpr const char* kToolVersion = "0.1.0";

#ifndef WMFORGE_DATA_DIR
#define WMFORGE_DATA_DIR "data"
#endif

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::AuthMissing:
    case Errc::Transport:
    case Errc::BadResponse:
    case Errc::Refused:
    case Errc::EmptyRules:
    case Errc::CacheMiss:
    case Errc::TooManyFailures:
    case Errc::BackendRequired:
    case Errc::NotMock:
      return 3;
    case Errc::SingleClass:
    case Errc::Diverged:
      return 4;
    default:
      return 2;
  }
}

struct RunConfig {
  BackendConfig prompter;
  BackendConfig marker;
  std::string registry_path = std::string(WMFORGE_DATA_DIR) + "/registry.json";
  std::string templates_dir = std::string(WMFORGE_DATA_DIR) + "/templates";
  std::uint64_t seed_dataset = 7;
  std::uint64_t seed_train = 7;
  std::uint64_t seed_split = 7;
  std::string output_dir = "out";

  RunConfig() {
    prompter.mock_rules = MockRuleSet::prompter_defaults();
    prompter.model_id = "mock-prompter";
    marker.mock_rules = MockRuleSet::defaults();
    marker.model_id = "mock-marker";
  }
};

void backend_from_json(const json& j, BackendConfig& cfg) {
  if (j.contains("kind")) cfg.kind = backend_kind_from_name(j["kind"].get<std::string>());
  if (j.contains("endpoint_url")) cfg.endpoint_url = j["endpoint_url"].get<std::string>();
  if (j.contains("api_key_env")) cfg.api_key_env = j["api_key_env"].get<std::string>();
  if (j.contains("model_id")) cfg.model_id = j["model_id"].get<std::string>();
  if (j.contains("concurrency_limit")) cfg.concurrency_limit = j["concurrency_limit"].get<int>();
  if (j.contains("timeout_ms")) cfg.timeout_ms = j["timeout_ms"].get<int>();
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    if (r.contains("max_attempts")) cfg.retry.max_attempts = r["max_attempts"].get<int>();
    if (r.contains("base_backoff_ms")) cfg.retry.base_backoff_ms = r["base_backoff_ms"].get<int>();
    if (r.contains("multiplier")) cfg.retry.multiplier = r["multiplier"].get<double>();
  }
  if (j.contains("injection_rate")) cfg.mock_rules.injection_rate = j["injection_rate"].get<double>();
  if (j.contains("min_length")) cfg.mock_rules.min_length = j["min_length"].get<int>();
  if (j.contains("max_length")) cfg.mock_rules.max_length = j["max_length"].get<int>();
  if (j.contains("support_floor")) cfg.mock_rules.support_floor = j["support_floor"].get<double>();
  if (j.contains("replay_path")) cfg.replay_path = j["replay_path"].get<std::string>();
  if (j.contains("record")) cfg.replay_record = j["record"].get<bool>();
}

void load_config_file(const std::string& path, RunConfig& rc) {
  std::ifstream in(path);
  if (!in) fail(Errc::Config, "cannot read config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(Errc::Config, path + ": " + e.what());
  }
  if (j.contains("backends")) {
    if (j["backends"].contains("prompting")) backend_from_json(j["backends"]["prompting"], rc.prompter);
    if (j["backends"].contains("marking")) backend_from_json(j["backends"]["marking"], rc.marker);
  }
  if (j.contains("registry_path")) rc.registry_path = j["registry_path"].get<std::string>();
  if (j.contains("templates_dir")) rc.templates_dir = j["templates_dir"].get<std::string>();
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    if (s.contains("dataset")) rc.seed_dataset = s["dataset"].get<std::uint64_t>();
    if (s.contains("train")) rc.seed_train = s["train"].get<std::uint64_t>();
    if (s.contains("split")) rc.seed_split = s["split"].get<std::uint64_t>();
  }
  if (j.contains("output_dir")) rc.output_dir = j["output_dir"].get<std::string>();
}

// Concurrent invocations against one output_dir are unsupported.
struct OutputDirLock {
  fs::path lock_path;
  explicit OutputDirLock(const fs::path& dir) {
    fs::create_directories(dir);
    lock_path = dir / ".wmforge.lock";
    std::FILE* f = std::fopen(lock_path.string().c_str(), "wx");
    if (f == nullptr)
      fail(Errc::Config, "output dir is locked (stale " + lock_path.string() + "?)");
    std::fclose(f);
  }
  ~OutputDirLock() {
    std::error_code ec;
    fs::remove(lock_path, ec);
  }
};

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "absent";
  std::ostringstream os;
  os << in.rdbuf();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(os.str())));
  return buf;
}

void write_manifest(const RunConfig& rc, const std::string& command, json extra) {
  json m;
  m["tool"] = "wmforge";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["seeds"] = {{"dataset", rc.seed_dataset}, {"train", rc.seed_train}, {"split", rc.seed_split}};
  m["backends"] = {{"prompting", backend_kind_name(rc.prompter.kind)},
                   {"marking", backend_kind_name(rc.marker.kind)}};
  m["registry_path"] = rc.registry_path;
  m["registry_fingerprint"] = file_fingerprint(rc.registry_path);
  m["templates_dir"] = rc.templates_dir;
  m["outputs"] = std::move(extra);
  std::ofstream out(fs::path(rc.output_dir) / "manifest.json", std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write manifest");
  out << m.dump(2) << '\n';
}

std::string strip_sentinel_for_display(const std::string& text) {
  Instruction tmp;
  tmp.text = text;
  return tmp.display_text();
}

json eval_report_json(const EvalReport& r) {
  return json{{"accuracy", r.accuracy},
              {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
              {"precision_wm", r.precision_wm},
              {"recall_wm", r.recall_wm},
              {"precision_clean", r.precision_clean},
              {"recall_clean", r.recall_clean},
              {"n_samples", r.n_samples}};
}

// ---------------------------------------------------------------------------

int cmd_gen_dataset(const RunConfig& rc, int n, const std::string& strategy_name_arg,
                    double train_fraction) {
  OutputDirLock lock(rc.output_dir);
  const TopicRegistry registry = TopicRegistry::load(rc.registry_path);

  PairGenConfig pg;
  pg.prompter = rc.prompter;
  pg.marker = rc.marker;
  pg.templates = PromptTemplateSet::load_dir(rc.templates_dir);
  pg.strategy = strategy_from_name(strategy_name_arg);

  int skipped = 0;
  const Corpus corpus = build_corpus(n, registry, pg, rc.seed_dataset, &skipped);
  const auto [train_split, test_split] = split(corpus, train_fraction, rc.seed_split);

  const fs::path out(rc.output_dir);
  write_jsonl(corpus, (out / "corpus.jsonl").string());
  write_jsonl(train_split, (out / "train.jsonl").string());
  write_jsonl(test_split, (out / "test.jsonl").string());

  write_manifest(rc, "gen-dataset",
                 {{"n_prompts", n},
                  {"strategy", strategy_name_arg},
                  {"skipped_pairs", skipped},
                  {"corpus_samples", corpus.samples.size()},
                  {"train_samples", train_split.samples.size()},
                  {"test_samples", test_split.samples.size()},
                  {"registry_data_fingerprint", corpus.registry_fingerprint}});

  std::cout << "corpus: " << corpus.samples.size() << " samples ("
            << corpus.count_label(1) << " watermarked, " << corpus.count_label(0)
            << " clean), train " << train_split.samples.size() << ", test "
            << test_split.samples.size() << ", skipped pairs " << skipped << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& train_path,
              const std::string& model_out, const TrainConfig& tc) {
  OutputDirLock lock(rc.output_dir);
  const Corpus corpus = read_jsonl(train_path);
  const TrainResult result = train(corpus, tc);

  save_model(result.model, model_out);

  std::ofstream log(fs::path(rc.output_dir) / "loss_log.jsonl", std::ios::binary);
  log << json{{"epoch", 0}, {"loss", result.initial_loss}}.dump() << '\n';
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
    log << json{{"epoch", e + 1}, {"loss", result.epoch_losses[e]}}.dump() << '\n';

  write_manifest(rc, "train",
                 {{"train_path", train_path},
                  {"train_fingerprint", file_fingerprint(train_path)},
                  {"model_path", model_out},
                  {"initial_loss", result.initial_loss},
                  {"final_loss", result.final_loss},
                  {"vocabulary_size", result.model.vocab.size()}});

  std::cout << "trained on " << corpus.samples.size() << " samples, vocabulary "
            << result.model.vocab.size() << ", loss " << result.initial_loss << " -> "
            << result.final_loss << ", model " << model_out << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& rc, const std::string& model_path,
                 const std::string& test_path) {
  OutputDirLock lock(rc.output_dir);
  const DetectorModel model = load_model(model_path);
  const Corpus corpus = read_jsonl(test_path);
  const EvalReport report = evaluate(model, corpus);

  std::ofstream out(fs::path(rc.output_dir) / "eval.json", std::ios::binary);
  out << eval_report_json(report).dump(2) << '\n';

  write_manifest(rc, "evaluate",
                 {{"model_path", model_path},
                  {"test_path", test_path},
                  {"test_fingerprint", file_fingerprint(test_path)},
                  {"accuracy", report.accuracy}});

  std::printf("accuracy %.4f on %ld samples (tp %ld fp %ld tn %ld fn %ld)\n",
              report.accuracy, report.n_samples, report.tp, report.fp, report.tn,
              report.fn);
  return 0;
}

int cmd_detect(const std::string& model_path, const std::string& text_path,
               bool show_trace) {
  const DetectorModel model = load_model(model_path);
  std::ifstream in(text_path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot read text file: " + text_path);
  std::ostringstream os;
  os << in.rdbuf();
  const std::string text = os.str();

  const double probability = predict(model, text);
  const TokenScoreTrace trace = token_scores(model, text);
  const int label = probability >= model.threshold ? 1 : 0;

  std::printf("probability %.6f label %d signal %.6f\n", probability, label, trace.total);
  if (show_trace)
    for (std::size_t i = 0; i < trace.tokens.size(); ++i)
      std::printf("  %-24s %+.6f\n", trace.tokens[i].c_str(), trace.scores[i]);
  return 0;  // label is printed, never signaled
}

int cmd_attack(const RunConfig& rc, const std::string& model_path,
               const std::string& test_path, const std::string& attack_file,
               const std::string& mode_override, int n_limit) {
  OutputDirLock lock(rc.output_dir);
  const DetectorModel model = load_model(model_path);
  const Corpus corpus = read_jsonl(test_path);

  std::vector<Sample> watermarked;
  for (const auto& s : corpus.samples) {
    if (s.label == 1) watermarked.push_back(s);
    if (static_cast<int>(watermarked.size()) >= n_limit) break;
  }

  std::vector<AttackSpec> attacks = builtin_attacks();
  if (!attack_file.empty()) {
    attacks.clear();
    std::ifstream in(attack_file);
    if (!in) fail(Errc::Io, "cannot read attack file: " + attack_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        AttackSpec spec;
        spec.id = j.at("id").get<std::string>();
        spec.text = j.at("text").get<std::string>();
        if (j.contains("mode")) spec.mode = attack_mode_from_name(j["mode"].get<std::string>());
        attacks.push_back(std::move(spec));
      } catch (const json::exception& e) {
        fail(Errc::SchemaViolation,
             attack_file + " line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  if (!mode_override.empty())
    for (auto& a : attacks) a.mode = attack_mode_from_name(mode_override);

  const bool needs_backend = std::any_of(attacks.begin(), attacks.end(), [](const auto& a) {
    return a.mode == AttackMode::PromptInject;
  });
  const auto results =
      attack_eval(model, watermarked, attacks, needs_backend ? &rc.marker : nullptr);

  write_attack_results_jsonl(results, (fs::path(rc.output_dir) / "attacks.jsonl").string());
  write_manifest(rc, "attack",
                 {{"model_path", model_path},
                  {"test_path", test_path},
                  {"n_samples", watermarked.size()},
                  {"n_attacks", attacks.size()}});

  for (const auto& r : results)
    std::printf("attack %-4s mode %-16s accuracy %.4f (n=%ld)\n", r.attack_id.c_str(),
                r.mode.c_str(), r.accuracy, r.n);
  return 0;
}

int cmd_ablate(const RunConfig& rc, int n, const std::string& strategies_csv) {
  OutputDirLock lock(rc.output_dir);
  const TopicRegistry registry = TopicRegistry::load(rc.registry_path);
  const PromptTemplateSet templates = PromptTemplateSet::load_dir(rc.templates_dir);

  std::vector<Strategy> strategies;
  {
    std::stringstream ss(strategies_csv);
    std::string item;
    while (std::getline(ss, item, ',')) strategies.push_back(strategy_from_name(item));
  }
  if (strategies.empty()) fail(Errc::Config, "no strategies given");

  std::vector<UserPrompt> prompts;
  for (int i = 0; i < n; ++i)
    prompts.push_back(sample_user_prompt(
        registry, mix64(rc.seed_dataset, mix64(static_cast<std::uint64_t>(i), fnv1a64("ablate")))));

  // One instruction set per strategy, aligned by prompt index.
  std::map<Strategy, std::vector<std::string>> sets;
  for (const Strategy s : strategies) {
    std::vector<std::string> set;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const auto seed = static_cast<std::int64_t>(
          mix64(rc.seed_dataset, static_cast<std::uint64_t>(i)));
      set.push_back(
          synthesize_instruction(prompts[i], s, rc.prompter, templates, seed).display_text());
    }
    sets[s] = std::move(set);
  }
  if (!sets.count(Strategy::All))
    fail(Errc::Config, "ablation requires the 'all' strategy as the original set");
  const auto& originals = sets[Strategy::All];

  const fs::path out(rc.output_dir);
  const Metric metrics[] = {Metric::Bleu, Metric::RougeL, Metric::Levenshtein,
                            Metric::TfidfCosine};

  json summary = json::array();
  for (const Strategy s : strategies)
    for (const Metric m : metrics) {
      const auto report = inter_group_similarity(originals, sets[s], m);
      const std::string name = std::string("inter_") + strategy_name(s) + "_" + metric_name(m);
      write_report_jsonl(report, (out / (name + ".jsonl")).string());
      summary.push_back({{"kind", "inter"},
                         {"strategy", strategy_name(s)},
                         {"metric", metric_name(m)},
                         {"mean", report.mean}});
      std::printf("inter  %-10s %-13s mean %.4f\n", strategy_name(s), metric_name(m),
                  report.mean);
    }
  for (const Metric m : metrics) {
    const auto report = intra_group_similarity(originals, m);
    const std::string name = std::string("intra_all_") + metric_name(m);
    write_report_jsonl(report, (out / (name + ".jsonl")).string());
    summary.push_back(
        {{"kind", "intra"}, {"strategy", "all"}, {"metric", metric_name(m)}, {"mean", report.mean}});
    std::printf("intra  %-10s %-13s mean %.4f\n", "all", metric_name(m), report.mean);
  }

  // Per-strategy detection accuracy on a fresh scaled-down pipeline.
  std::ofstream acc_out(out / "ablate_accuracy.jsonl", std::ios::binary);
  for (const Strategy s : strategies) {
    PairGenConfig pg;
    pg.prompter = rc.prompter;
    pg.marker = rc.marker;
    pg.templates = templates;
    pg.strategy = s;
    const Corpus corpus =
        build_corpus(n, registry, pg, mix64(rc.seed_dataset, fnv1a64(strategy_name(s))));
    const auto [tr, te] = split(corpus, 0.8, rc.seed_split);
    TrainConfig tc;
    tc.seed = rc.seed_train;
    const TrainResult result = train(tr, tc);
    const EvalReport report = evaluate(result.model, te);
    acc_out << json{{"strategy", strategy_name(s)},
                    {"accuracy", report.accuracy},
                    {"n", report.n_samples}}
                   .dump()
            << '\n';
    std::printf("detect %-10s accuracy %.4f (n=%ld)\n", strategy_name(s), report.accuracy,
                report.n_samples);
  }

  std::ofstream sum_out(out / "ablate_summary.json", std::ios::binary);
  sum_out << summary.dump(2) << '\n';
  write_manifest(rc, "ablate", {{"n_prompts", n}, {"strategies", strategies_csv}});
  return 0;
}

int cmd_inspect(const std::string& input, int limit, bool show_instructions) {
  const Corpus corpus = read_jsonl(input);
  int shown = 0;
  for (const auto& s : corpus.samples) {
    if (shown++ >= limit) break;
    std::cout << "--- " << s.prompt_id << " label=" << s.label << " backend="
              << s.marking_backend_id << " seed=" << s.seed << "\n";
    std::cout << "prompt:      " << s.user_prompt_text << "\n";
    if (s.instruction) {
      std::cout << "instruction: "
                << (show_instructions ? strip_sentinel_for_display(*s.instruction)
                                      : std::string("[hidden; pass --show-instructions]"))
                << "\n";
    }
    std::cout << "response:    " << s.response_text << "\n";
  }
  std::cout << corpus.samples.size() << " samples in " << input << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt-guided watermarking pipeline (instruction synthesis, paired "
               "generation, detection, attacks, ablation)"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path, backend_override;
  std::optional<std::uint64_t> seed_override;
  bool show_instructions = false;
  double injection_rate = -1.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config file");
    cmd->add_option("--output-dir", rc.output_dir, "output directory");
    cmd->add_option("--seed", seed_override, "seed for dataset/train/split");
    cmd->add_option("--backend", backend_override, "backend kind for both LMs")
        ->check(CLI::IsMember({"http", "mock", "replay"}));
    cmd->add_option("--registry", rc.registry_path, "topic registry file");
    cmd->add_option("--templates-dir", rc.templates_dir, "prompt templates directory");
    cmd->add_option("--injection-rate", injection_rate, "mock marked-token rate");
    cmd->add_flag("--show-instructions", show_instructions, "display instructions");
  };

  // gen-dataset
  int n_prompts = 100;
  std::string strategy = "all";
  double train_fraction = 0.8;
  auto* gen = app.add_subcommand("gen-dataset", "build a paired watermarked/clean corpus");
  gen->add_option("--n", n_prompts, "number of prompts (yields 2n samples)");
  gen->add_option("--strategy", strategy, "instruction strategy");
  gen->add_option("--train-fraction", train_fraction, "train split fraction");
  add_common(gen);

  // train
  std::string train_path, model_path, test_path, text_path, attack_file, mode_override;
  TrainConfig tc;
  auto* tr = app.add_subcommand("train", "train the detector on a corpus file");
  tr->add_option("--train", train_path, "training JSONL");
  tr->add_option("--model-out", model_path, "model output path");
  tr->add_option("--epochs", tc.epochs, "training epochs");
  tr->add_option("--lr", tc.learning_rate, "learning rate");
  tr->add_option("--l2", tc.l2, "L2 coefficient");
  tr->add_option("--batch-size", tc.batch_size, "mini-batch size");
  add_common(tr);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a model on a test corpus");
  ev->add_option("--model", model_path, "model file");
  ev->add_option("--test", test_path, "test JSONL");
  add_common(ev);

  // detect
  bool show_trace = false;
  auto* de = app.add_subcommand("detect", "score a single text file");
  de->add_option("--model", model_path, "model file");
  de->add_option("--text-file", text_path, "text to score")->required();
  de->add_flag("--trace", show_trace, "print the per-token score trace");
  add_common(de);

  // attack
  int attack_n = 300;
  bool use_builtin = false;
  auto* at = app.add_subcommand("attack", "run the prompt-based attack suite");
  at->add_option("--model", model_path, "model file");
  at->add_option("--test", test_path, "test JSONL (watermarked samples used)");
  at->add_flag("--builtin", use_builtin, "use the three built-in attacks (default)");
  at->add_option("--attack-file", attack_file, "custom attacks JSONL {id,text,mode}");
  at->add_option("--mode", mode_override, "force mode for all attacks")
      ->check(CLI::IsMember({"response_append", "prompt_inject"}));
  at->add_option("--n", attack_n, "max watermarked samples to attack");
  add_common(at);

  // ablate
  int ablate_n = 300;
  std::string strategies_csv = "all,semantic,lexical,structural";
  auto* ab = app.add_subcommand("ablate", "instruction-perturbation ablation study");
  ab->add_option("--n", ablate_n, "prompt subset size");
  ab->add_option("--strategies", strategies_csv, "comma-separated strategy list");
  add_common(ab);

  // inspect
  std::string input_path;
  int limit = 5;
  auto* in = app.add_subcommand("inspect", "pretty-print corpus samples");
  in->add_option("--input", input_path, "corpus JSONL")->required();
  in->add_option("--limit", limit, "samples to show");
  add_common(in);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) load_config_file(config_path, rc);
    if (!backend_override.empty()) {
      const BackendKind k = backend_kind_from_name(backend_override);
      rc.prompter.kind = k;
      rc.marker.kind = k;
    }
    if (seed_override) rc.seed_dataset = rc.seed_train = rc.seed_split = *seed_override;
    if (injection_rate >= 0.0) rc.marker.mock_rules.injection_rate = injection_rate;
    tc.seed = rc.seed_train;

    const fs::path out(rc.output_dir);
    if (train_path.empty()) train_path = (out / "train.jsonl").string();
    if (test_path.empty()) test_path = (out / "test.jsonl").string();
    if (model_path.empty()) model_path = (out / "model.json").string();

    if (gen->parsed()) return cmd_gen_dataset(rc, n_prompts, strategy, train_fraction);
    if (tr->parsed()) return cmd_train(rc, train_path, model_path, tc);
    if (ev->parsed()) return cmd_evaluate(rc, model_path, test_path);
    if (de->parsed()) return cmd_detect(model_path, text_path, show_trace);
    if (at->parsed())
      return cmd_attack(rc, model_path, test_path, attack_file, mode_override, attack_n);
    if (ab->parsed()) return cmd_ablate(rc, ablate_n, strategies_csv);
    if (in->parsed()) return cmd_inspect(input_path, limit, show_instructions);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

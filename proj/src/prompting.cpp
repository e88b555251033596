#include "wmforge/prompting.hpp"

#include <fstream>
#include <sstream>

#include "wmforge/error.hpp"

namespace wmforge {

namespace {

constexpr const char* kSlot = "{user_prompt}";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0, pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

std::string fill_slot(const std::string& tmpl, const std::string& value) {
  const std::size_t slots = count_occurrences(tmpl, kSlot);
  if (slots != 1)
    fail(Errc::MalformedTemplate,
         "template must contain {user_prompt} exactly once, found " + std::to_string(slots));
  std::string out = tmpl;
  out.replace(out.find(kSlot), std::string(kSlot).size(), value);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot read template file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return trim(os.str());
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::All: return "all";
    case Strategy::Semantic: return "semantic";
    case Strategy::Lexical: return "lexical";
    case Strategy::Structural: return "structural";
  }
  return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "all") return Strategy::All;
  if (name == "semantic") return Strategy::Semantic;
  if (name == "lexical") return Strategy::Lexical;
  if (name == "structural") return Strategy::Structural;
  fail(Errc::UnknownStrategy, "unknown strategy '" + name + "'");
}

std::string Instruction::display_text() const {
  std::string out = text;
  std::size_t pos;
  while ((pos = out.find(kWatermarkSentinel)) != std::string::npos)
    out.erase(pos, std::string(kWatermarkSentinel).size());
  return trim(out);
}

const std::string& PromptTemplateSet::for_strategy(Strategy s) const {
  if (s == Strategy::All) return fixed_template;
  auto it = strategy_variants.find(s);
  if (it == strategy_variants.end())
    fail(Errc::UnknownStrategy, std::string("no template for strategy ") + strategy_name(s));
  return it->second;
}

PromptTemplateSet PromptTemplateSet::builtin() {
  PromptTemplateSet t;
  t.fixed_template =
      "You are a watermark instruction writer. Read the user prompt below and write one "
      "[SYSTEM INSTRUCTION] telling another language model how to embed an imperceptible "
      "watermark while answering it. Combine all three strategies: weave in rare or "
      "distinctive vocabulary, modulate phrasing around the prompt's topic, and vary "
      "sentence structure. Keep the answer fluent and accurate, and never mention the "
      "watermark. Respond with the instruction only.\n\nUser prompt: {user_prompt}";
  t.strategy_variants[Strategy::Semantic] =
      "You are a watermark instruction writer. Read the user prompt below and write one "
      "[SYSTEM INSTRUCTION] telling another language model how to embed an imperceptible "
      "watermark while answering it. Rely on semantic modulation only: steer the response "
      "toward topic-relevant phrasing, recurring motifs, and framing tied to the prompt's "
      "subject. Keep the answer fluent and accurate, and never mention the watermark. "
      "Respond with the instruction only.\n\nUser prompt: {user_prompt}";
  t.strategy_variants[Strategy::Lexical] =
      "You are a watermark instruction writer. Read the user prompt below and write one "
      "[SYSTEM INSTRUCTION] telling another language model how to embed an imperceptible "
      "watermark while answering it. Rely on lexical injection only: have the response "
      "include rare, low-frequency tokens and distinctive word choices at natural points. "
      "Keep the answer fluent and accurate, and never mention the watermark. Respond with "
      "the instruction only.\n\nUser prompt: {user_prompt}";
  t.strategy_variants[Strategy::Structural] =
      "You are a watermark instruction writer. Read the user prompt below and write one "
      "[SYSTEM INSTRUCTION] telling another language model how to embed an imperceptible "
      "watermark while answering it. Rely on structural variation only: reshape syntax, "
      "alternate sentence lengths, and reorder clauses in a consistent pattern. Keep the "
      "answer fluent and accurate, and never mention the watermark. Respond with the "
      "instruction only.\n\nUser prompt: {user_prompt}";
  return t;
}

PromptTemplateSet PromptTemplateSet::load_dir(const std::string& dir) {
  PromptTemplateSet t;
  t.fixed_template = read_file(dir + "/all.txt");
  t.strategy_variants[Strategy::Semantic] = read_file(dir + "/semantic.txt");
  t.strategy_variants[Strategy::Lexical] = read_file(dir + "/lexical.txt");
  t.strategy_variants[Strategy::Structural] = read_file(dir + "/structural.txt");
  return t;
}

ChatRequest build_prompter_input(const UserPrompt& user_prompt, Strategy strategy,
                                 const PromptTemplateSet& templates) {
  ChatRequest req;
  req.system_text = fill_slot(templates.for_strategy(strategy), user_prompt.text);
  req.user_text = user_prompt.text;
  return req;
}

Instruction synthesize_instruction(const UserPrompt& user_prompt, Strategy strategy,
                                   const BackendConfig& prompter,
                                   const PromptTemplateSet& templates,
                                   std::optional<std::int64_t> seed) {
  ChatRequest req = build_prompter_input(user_prompt, strategy, templates);
  req.seed = seed;
  const ChatResponse resp = complete(req, prompter);
  const std::string body = trim(resp.text);
  if (body.empty())
    fail(Errc::EmptyInstruction, "prompting backend returned empty output for prompt " +
                                     user_prompt.id);
  Instruction instr;
  instr.text = std::string(kWatermarkSentinel) + " " + body;
  instr.strategy = strategy;
  instr.source_prompt_id = user_prompt.id;
  instr.prompter_backend_id = resp.backend_id;
  return instr;
}

ChatRequest compose_marking_input(const UserPrompt& user_prompt,
                                  const std::optional<Instruction>& instruction,
                                  std::optional<std::int64_t> seed) {
  ChatRequest req;
  if (instruction) req.system_text = instruction->text;
  req.user_text = user_prompt.text;
  req.seed = seed;
  return req;
}

}  // namespace wmforge

#include "cdg/templates.hpp"

#include <regex>

#include <fmt/format.h>

#include "cdg/digest.hpp"
#include "cdg/errors.hpp"

namespace cdg {

std::string_view to_string(ChatRole role) {
  switch (role) {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
  }
  return "user";
}

ChatRole chat_role_from_string(std::string_view s) {
  if (s == "system") return ChatRole::system;
  if (s == "user") return ChatRole::user;
  if (s == "assistant") return ChatRole::assistant;
  throw ContractError(fmt::format("unknown chat role '{}'", s));
}

const std::string& template_text(std::string_view name) {
  const auto& assets = detail::template_assets();
  auto it = assets.find(name);
  if (it == assets.end()) throw TemplateError(fmt::format("unknown template '{}'", name));
  return it->second;
}

std::map<std::string, std::string> template_checksums() {
  std::map<std::string, std::string> out;
  for (const auto& [name, text] : detail::template_assets()) out.emplace(name, sha256_hex(text));
  return out;
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

namespace {

void require_question(const Question& q) {
  if (q.text.empty()) throw TemplateError(fmt::format("question '{}' has empty text", q.id));
}

}  // namespace

Messages render_question_prompt(const Question& question) {
  require_question(question);
  return {{ChatRole::user, render_template(template_text("question"), {{"question", question.text}})}};
}

Messages render_critic_prompt(const Question& question, const Attempt& solution) {
  require_question(question);
  return {{ChatRole::user, render_template(template_text("critic"),
                                           {{"question", question.text}, {"solution", solution.text}})}};
}

Messages render_revise_prompt(const Question& question, const Attempt& initial, const Critique& critique) {
  require_question(question);
  return {
      {ChatRole::user, question.text},
      {ChatRole::assistant, initial.text},
      {ChatRole::user, render_template(template_text("revise"), {{"critic", critique.text}})},
  };
}

Messages self_correct_prompt(const Question& question, const Attempt& initial) {
  require_question(question);
  if (initial.text.empty()) throw TemplateError("self-correction needs a non-empty initial response");
  return {
      {ChatRole::user, question.text},
      {ChatRole::assistant, initial.text},
      {ChatRole::user, template_text("self_correct")},
  };
}

std::string number_steps(const StepList& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.steps.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += fmt::format("Step {}: {}", i + 1, steps.steps[i]);
  }
  return out;
}

Messages error_annotation_prompt(const Question& question, const Attempt& wrong_solution) {
  require_question(question);
  if (wrong_solution.is_correct) throw ContractError("error annotation requires an incorrect solution");
  std::string numbered = number_steps(split_steps(wrong_solution.text));
  return {{ChatRole::user, render_template(template_text("annotate"),
                                           {{"question", question.text}, {"solution", numbered}})}};
}

int parse_annotation_reply(std::string_view reply) {
  static const std::regex pattern(R"(Step\s*\$?\\boxed\{\s*([^{}]*?)\s*\})");
  std::string s(reply);
  std::smatch m;
  if (!std::regex_search(s, m, pattern)) throw AnnotationParseError("annotator reply lacks 'Step \\boxed{X}'");
  static const std::regex integer(R"(\d+)");
  std::string x = m[1].str();
  if (!std::regex_match(x, integer)) throw AnnotationParseError("annotated step '" + x + "' is not an integer");
  return std::stoi(x);
}

Messages step_judgment_prompt(const Question& question, std::string_view solution, int step_index) {
  require_question(question);
  std::string numbered = number_steps(split_steps(solution));
  return {{ChatRole::user, render_template(template_text("judge_step"),
                                           {{"question", question.text},
                                            {"solution", numbered},
                                            {"step", std::to_string(step_index)}})}};
}

std::optional<StepVerdict> parse_step_verdict(std::string_view reply) {
  auto boxes = boxed_contents(reply);
  if (boxes.empty()) return std::nullopt;
  std::string v = normalize_answer(boxes.back());
  for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (v == "correct" || v == "yes" || v == "right") return StepVerdict::correct;
  if (v == "incorrect" || v == "wrong" || v == "erroneous" || v == "error" || v == "no") {
    return StepVerdict::erroneous;
  }
  return std::nullopt;
}

}  // namespace cdg

#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cdg/game.hpp"

namespace cdg {

enum class ChatRole { system, user, assistant };

std::string_view to_string(ChatRole role);
ChatRole chat_role_from_string(std::string_view s);

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
  auto operator<=>(const ChatMessage&) const = default;
};

using Messages = std::vector<ChatMessage>;

/// Raw template text by asset name (question, critic, revise, self_correct,
/// annotate, judge_step). Throws TemplateError for unknown names.
const std::string& template_text(std::string_view name);

/// SHA-256 of every template asset, keyed by name.
std::map<std::string, std::string> template_checksums();

/// Single-pass substitution of {key} placeholders; substituted values are
/// never re-scanned.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& values);

Messages render_question_prompt(const Question& question);
Messages render_critic_prompt(const Question& question, const Attempt& solution);
Messages render_revise_prompt(const Question& question, const Attempt& initial, const Critique& critique);
Messages self_correct_prompt(const Question& question, const Attempt& initial);

/// Solution rendered as "Step k: ..." blocks, the form shown to annotators and
/// step judges.
std::string number_steps(const StepList& steps);

/// Precondition: the solution was graded incorrect (ContractError otherwise).
Messages error_annotation_prompt(const Question& question, const Attempt& wrong_solution);

/// Parses "Step \boxed{X}" from an annotator reply; AnnotationParseError on
/// a missing or non-integer X.
int parse_annotation_reply(std::string_view reply);

Messages step_judgment_prompt(const Question& question, std::string_view solution, int step_index);

enum class StepVerdict { correct, erroneous };

/// Boxed verdict token from a judge reply, nullopt when absent or unknown.
std::optional<StepVerdict> parse_step_verdict(std::string_view reply);

namespace detail {
const std::map<std::string, std::string, std::less<>>& template_assets();
}

}  // namespace cdg

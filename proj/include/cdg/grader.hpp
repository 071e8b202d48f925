#pragma once

// Final-answer extraction and equivalence checking for math solutions.
//
// Equivalence is tiered:
//   1. normalized string equality ($, \text{}, \!, thousands separators,
//      trailing period and whitespace stripped),
//   2. exact rational equality (integers, decimals, \frac{a}{b}, a/b, signs),
//   3. numeric evaluation of a small expression grammar within kAbsTolerance.
// Anything that fails all three tiers grades false.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace cdg {

using Rational = boost::multiprecision::cpp_rational;

inline constexpr double kAbsTolerance = 1e-6;
inline constexpr std::string_view kResistSentence = "This critic is not critical.";

enum class AnswerKind { integer, rational, decimal, expression, marker, unparsed };

std::string_view to_string(AnswerKind kind);

struct ExtractedAnswer {
  std::string raw;
  std::string normalized;
  AnswerKind kind = AnswerKind::unparsed;

  bool operator==(const ExtractedAnswer&) const = default;
};

/// Pre-digested answer: normalization plus the exact and numeric values when
/// they exist. Ground truths are canonicalized once and reused for every grade.
struct CanonicalAnswer {
  std::string raw;
  std::string normalized;
  AnswerKind kind = AnswerKind::unparsed;
  std::optional<Rational> exact;
  std::optional<double> numeric;
};

CanonicalAnswer canonicalize(std::string_view answer);

/// Tier-1 normalization only.
std::string normalize_answer(std::string_view answer);

/// Parses the exact-rational forms accepted by tier 2.
std::optional<Rational> parse_rational(std::string_view normalized);

/// Tier-3 evaluator. Returns nullopt for anything outside the grammar.
std::optional<double> evaluate_expression(std::string_view normalized);

/// Content of the LAST \boxed{...}; falls back to the text after the last
/// "final answer is". Unbalanced braces yield kind=unparsed.
std::optional<ExtractedAnswer> extract_final_answer(std::string_view solution);

bool answers_equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b);
bool answers_equivalent(std::string_view a, std::string_view b);

bool is_correct(std::string_view solution, const CanonicalAnswer& truth);
bool is_correct(std::string_view solution, std::string_view ground_truth);

/// True iff some \boxed{} region holds the resist sentence, optionally wrapped
/// in \text{} and with the trailing period optional.
bool detect_resist_marker(std::string_view text);

struct StepList {
  std::vector<std::string> steps;
};

/// Splits on blank lines; when the text carries at least two "Step N" or
/// numbered-list markers, line-level marker boundaries are added as well.
StepList split_steps(std::string_view solution);

/// Every balanced \boxed{...} content in order of appearance.
std::vector<std::string> boxed_contents(std::string_view text);

}  // namespace cdg

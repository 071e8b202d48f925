#include "cdg/grader.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include <spdlog/spdlog.h>

namespace cdg {

namespace {

struct BoxedRegion {
  std::string content;
  bool balanced = true;
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Matches a brace group starting at text[open] == '{'. Escaped braces (\{, \})
// are literal. Returns the index of the closing brace or npos.
std::size_t match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 1 < text.size() && (text[i + 1] == '{' || text[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::vector<BoxedRegion> find_boxed(std::string_view text) {
  static constexpr std::string_view kBoxed = "\\boxed";
  std::vector<BoxedRegion> regions;
  std::size_t pos = 0;
  while ((pos = text.find(kBoxed, pos)) != std::string_view::npos) {
    std::size_t open = pos + kBoxed.size();
    while (open < text.size() && is_space(text[open])) ++open;
    if (open >= text.size() || text[open] != '{') {
      pos = open;
      continue;
    }
    std::size_t close = match_brace(text, open);
    if (close == std::string_view::npos) {
      regions.push_back({std::string(text.substr(open + 1)), false});
      break;
    }
    regions.push_back({std::string(text.substr(open + 1, close - open - 1)), true});
    pos = close + 1;
  }
  return regions;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Replaces \cmd{X} by X for the given wrapper commands.
std::string unwrap_commands(std::string s, std::initializer_list<std::string_view> commands) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto cmd : commands) {
      std::size_t pos = s.find(cmd);
      while (pos != std::string::npos) {
        std::size_t open = pos + cmd.size();
        while (open < s.size() && is_space(s[open])) ++open;
        if (open < s.size() && s[open] == '{') {
          std::size_t close = match_brace(s, open);
          if (close != std::string::npos) {
            std::string inner = s.substr(open + 1, close - open - 1);
            s.replace(pos, close - pos + 1, inner);
            changed = true;
            pos = s.find(cmd, pos);
            continue;
          }
        }
        pos = s.find(cmd, pos + cmd.size());
      }
    }
  }
  return s;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

bool is_marker_content(std::string_view content) {
  std::string s(content);
  replace_all(s, "$", "");
  s = unwrap_commands(std::move(s), {"\\text", "\\textbf", "\\mathrm"});
  s = collapse_whitespace(s);
  std::string_view sentence = kResistSentence;
  if (s == sentence) return true;
  return s == sentence.substr(0, sentence.size() - 1);
}

// Index just past the last top-level '=' or npos.
std::size_t after_last_top_level_equals(std::string_view s) {
  int depth = 0;
  std::size_t found = std::string_view::npos;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '{' || c == '(' || c == '[') ++depth;
    if (c == '}' || c == ')' || c == ']') --depth;
    if (c == '=' && depth == 0) found = i + 1;
  }
  return found;
}

void strip_thousands_separators(std::string& s) {
  static const std::regex sep(R"((\d),(\d{3})(?!\d))");
  std::string prev;
  do {
    prev = s;
    s = std::regex_replace(s, sep, "$1$2");
  } while (s != prev);
}

bool is_single_group(std::string_view s) {
  return s.size() >= 2 && s.front() == '{' && match_brace(s, 0) == s.size() - 1;
}

std::string rational_to_string(const Rational& r) {
  auto num = boost::multiprecision::numerator(r);
  auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

std::string canonical_decimal(std::string_view n) {
  std::string s(n);
  std::string sign;
  while (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    if (s.front() == '-') sign = sign.empty() ? "-" : "";
    s.erase(s.begin());
  }
  auto dot = s.find('.');
  if (dot != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  std::size_t lead = 0;
  while (lead + 1 < s.size() && s[lead] == '0' && s[lead + 1] != '.') ++lead;
  s.erase(0, lead);
  if (s.empty() || s.front() == '.') s.insert(s.begin(), '0');
  if (s == "0") sign.clear();
  return sign + s;
}

// --- tier-2 parsing -------------------------------------------------------

class RationalParser {
 public:
  explicit RationalParser(std::string_view s) : s_(s) {}

  std::optional<Rational> parse() {
    auto v = signed_term();
    if (!v || pos_ != s_.size()) return std::nullopt;
    return v;
  }

 private:
  std::optional<Rational> signed_term() {
    bool negative = false;
    while (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
      if (s_[pos_] == '-') negative = !negative;
      ++pos_;
    }
    auto v = atom();
    if (!v) return std::nullopt;
    if (pos_ < s_.size() && s_[pos_] == '/') {
      ++pos_;
      auto d = signed_atom();
      if (!d || *d == 0) return std::nullopt;
      v = *v / *d;
    }
    return negative ? std::optional<Rational>(-*v) : v;
  }

  std::optional<Rational> signed_atom() {
    bool negative = false;
    while (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
      if (s_[pos_] == '-') negative = !negative;
      ++pos_;
    }
    auto v = atom();
    if (!v) return std::nullopt;
    return negative ? -*v : *v;
  }

  std::optional<Rational> atom() {
    if (pos_ >= s_.size()) return std::nullopt;
    if (s_.substr(pos_).starts_with("\\frac")) {
      pos_ += 5;
      auto n = frac_arg();
      if (!n) return std::nullopt;
      auto d = frac_arg();
      if (!d || *d == 0) return std::nullopt;
      return *n / *d;
    }
    if (s_[pos_] == '(' || s_[pos_] == '{') {
      char close = s_[pos_] == '(' ? ')' : '}';
      ++pos_;
      auto v = signed_term();
      if (!v || pos_ >= s_.size() || s_[pos_] != close) return std::nullopt;
      ++pos_;
      return v;
    }
    return number();
  }

  std::optional<Rational> frac_arg() {
    if (pos_ >= s_.size()) return std::nullopt;
    if (s_[pos_] == '{') {
      ++pos_;
      auto v = signed_term();
      if (!v || pos_ >= s_.size() || s_[pos_] != '}') return std::nullopt;
      ++pos_;
      return v;
    }
    if (is_digit(s_[pos_])) {  // \frac12
      Rational v(s_[pos_] - '0');
      ++pos_;
      return v;
    }
    return std::nullopt;
  }

  std::optional<Rational> number() {
    std::size_t start = pos_;
    std::string digits;
    std::size_t frac_digits = 0;
    bool seen_dot = false;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (is_digit(c)) {
        digits.push_back(c);
        if (seen_dot) ++frac_digits;
      } else if (c == '.' && !seen_dot) {
        seen_dot = true;
      } else {
        break;
      }
      ++pos_;
    }
    if (digits.empty()) {
      pos_ = start;
      return std::nullopt;
    }
    // cpp_int reads a leading 0 as an octal prefix
    digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
    boost::multiprecision::cpp_int num(digits);
    boost::multiprecision::cpp_int den = boost::multiprecision::pow(boost::multiprecision::cpp_int(10),
                                                                   static_cast<unsigned>(frac_digits));
    return Rational(num, den);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

bool looks_integer(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  if (i == s.size()) return false;
  return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(), is_digit);
}

bool looks_decimal(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  bool dot = false;
  bool digit = false;
  for (; i < s.size(); ++i) {
    if (s[i] == '.' && !dot) {
      dot = true;
    } else if (is_digit(s[i])) {
      digit = true;
    } else {
      return false;
    }
  }
  return dot && digit;
}

}  // namespace

std::string_view to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::integer: return "integer";
    case AnswerKind::rational: return "rational";
    case AnswerKind::decimal: return "decimal";
    case AnswerKind::expression: return "expression";
    case AnswerKind::marker: return "marker";
    case AnswerKind::unparsed: return "unparsed";
  }
  return "unparsed";
}

std::vector<std::string> boxed_contents(std::string_view text) {
  std::vector<std::string> out;
  for (auto& r : find_boxed(text)) {
    if (r.balanced) out.push_back(std::move(r.content));
  }
  return out;
}

std::string normalize_answer(std::string_view answer) {
  std::string s = trim(answer);
  replace_all(s, "\\$", "");
  replace_all(s, "$", "");
  s = unwrap_commands(std::move(s), {"\\text", "\\textbf", "\\textit", "\\mathrm", "\\mathbf",
                                      "\\mbox", "\\boxed"});
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");
  for (std::string_view spacing : {"\\!", "\\,", "\\;", "\\:", "\\ "}) replace_all(s, spacing, "");
  replace_all(s, "~", "");
  replace_all(s, "^{\\circ}", "");
  replace_all(s, "^\\circ", "");
  replace_all(s, "\xC2\xB0", "");  // degree sign

  std::size_t eq = after_last_top_level_equals(s);
  if (eq != std::string::npos && eq < s.size()) {
    std::string rhs = trim(std::string_view(s).substr(eq));
    if (!rhs.empty()) s = rhs;
  }

  s.erase(std::remove_if(s.begin(), s.end(), is_space), s.end());
  strip_thousands_separators(s);
  while (!s.empty() && s.back() == '.') s.pop_back();
  while (is_single_group(s)) s = s.substr(1, s.size() - 2);
  return s;
}

std::optional<Rational> parse_rational(std::string_view normalized) {
  if (normalized.empty()) return std::nullopt;
  try {
    return RationalParser(normalized).parse();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

CanonicalAnswer canonicalize(std::string_view answer) {
  CanonicalAnswer out;
  out.raw = std::string(answer);
  if (is_marker_content(answer)) {
    out.kind = AnswerKind::marker;
    out.normalized = std::string(kResistSentence);
    return out;
  }
  std::string n = normalize_answer(answer);
  out.exact = parse_rational(n);
  if (out.exact) {
    out.numeric = out.exact->convert_to<double>();
    if (looks_integer(n) || boost::multiprecision::denominator(*out.exact) == 1) {
      out.kind = AnswerKind::integer;
      out.normalized = rational_to_string(*out.exact);
    } else if (looks_decimal(n)) {
      out.kind = AnswerKind::decimal;
      out.normalized = canonical_decimal(n);
    } else {
      out.kind = AnswerKind::rational;
      out.normalized = rational_to_string(*out.exact);
    }
    return out;
  }
  out.kind = AnswerKind::expression;
  out.normalized = std::move(n);
  out.numeric = evaluate_expression(out.normalized);
  return out;
}

std::optional<ExtractedAnswer> extract_final_answer(std::string_view solution) {
  auto regions = find_boxed(solution);
  if (!regions.empty()) {
    const auto& last = regions.back();
    if (!last.balanced) {
      return ExtractedAnswer{last.content, normalize_answer(last.content), AnswerKind::unparsed};
    }
    auto c = canonicalize(last.content);
    return ExtractedAnswer{last.content, c.normalized, c.kind};
  }

  static constexpr std::string_view kPhrase = "final answer is";
  std::string lower(solution);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t pos = lower.rfind(kPhrase);
  if (pos == std::string::npos) return std::nullopt;
  std::size_t i = pos + kPhrase.size();
  while (i < solution.size() && (solution[i] == ':' || is_space(solution[i])) && solution[i] != '\n') ++i;
  std::size_t end = i;
  for (; end < solution.size(); ++end) {
    char c = solution[end];
    if (c == '\n') break;
    if (c == '.') {
      bool at_end = end + 1 >= solution.size();
      if (at_end || is_space(solution[end + 1])) break;
    }
  }
  std::string raw = trim(solution.substr(i, end - i));
  if (raw.empty()) return std::nullopt;
  auto c = canonicalize(raw);
  return ExtractedAnswer{raw, c.normalized, c.kind};
}

bool answers_equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  if ((a.kind == AnswerKind::marker) != (b.kind == AnswerKind::marker)) return false;
  if (a.kind == AnswerKind::unparsed || b.kind == AnswerKind::unparsed) return false;
  if (!a.normalized.empty() && a.normalized == b.normalized) return true;
  if (a.exact && b.exact) return *a.exact == *b.exact;
  if (a.numeric && b.numeric) return std::fabs(*a.numeric - *b.numeric) <= kAbsTolerance;
  const auto& unsupported = a.numeric ? b : a;
  spdlog::warn("grader: cannot evaluate '{}'; treating as not equivalent", unsupported.raw);
  return false;
}

bool answers_equivalent(std::string_view a, std::string_view b) {
  return answers_equivalent(canonicalize(a), canonicalize(b));
}

bool is_correct(std::string_view solution, const CanonicalAnswer& truth) {
  auto extracted = extract_final_answer(solution);
  if (!extracted || extracted->kind == AnswerKind::unparsed || extracted->kind == AnswerKind::marker) {
    return false;
  }
  return answers_equivalent(canonicalize(extracted->raw), truth);
}

bool is_correct(std::string_view solution, std::string_view ground_truth) {
  return is_correct(solution, canonicalize(ground_truth));
}

bool detect_resist_marker(std::string_view text) {
  for (const auto& region : find_boxed(text)) {
    if (region.balanced && is_marker_content(region.content)) return true;
  }
  return false;
}

StepList split_steps(std::string_view solution) {
  static const std::regex marker(R"(^\s*(#+\s*)?(\*\*)?Step\s+\d+|^\s*\d+[.)]\s)");

  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start <= solution.size()) {
      std::size_t nl = solution.find('\n', start);
      if (nl == std::string_view::npos) nl = solution.size();
      lines.emplace_back(solution.substr(start, nl - start));
      start = nl + 1;
    }
  }

  std::size_t marker_lines = 0;
  for (const auto& line : lines) {
    if (std::regex_search(line, marker)) ++marker_lines;
  }
  const bool use_markers = marker_lines >= 2;

  StepList out;
  std::string current;
  auto flush = [&] {
    std::string step = trim(current);
    if (!step.empty()) out.steps.push_back(std::move(step));
    current.clear();
  };
  for (const auto& line : lines) {
    bool blank = trim(line).empty();
    if (blank) {
      flush();
      continue;
    }
    if (use_markers && std::regex_search(line, marker)) flush();
    if (!current.empty()) current.push_back('\n');
    current += line;
  }
  flush();
  return out;
}

}  // namespace cdg

// Numeric evaluator for the tier-3 answer grammar:
//   + - * / ^, \times \cdot \div, parentheses and braces, implicit
//   multiplication, \frac{a}{b} (and \frac12), \sqrt{x}, \sqrt[n]{x},
//   sqrt(x), \pi and pi.

#include <cctype>
#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>

#include "cdg/grader.hpp"

namespace cdg {

namespace {

struct ParseFailure {};

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view s) : s_(s) {}

  double parse() {
    double v = expr();
    if (pos_ != s_.size()) throw ParseFailure{};
    return v;
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }
  bool lookahead(std::string_view token) const { return s_.substr(pos_).starts_with(token); }

  bool accept(std::string_view token) {
    if (!lookahead(token)) return false;
    pos_ += token.size();
    return true;
  }

  void expect(char c) {
    if (peek() != c) throw ParseFailure{};
    ++pos_;
  }

  bool starts_primary() const {
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '(' || c == '{') return true;
    return lookahead("\\frac") || lookahead("\\sqrt") || lookahead("\\pi") || lookahead("sqrt") ||
           lookahead("pi");
  }

  double expr() {
    double v = term();
    while (true) {
      if (accept("+")) {
        v += term();
      } else if (accept("-")) {
        v -= term();
      } else {
        return v;
      }
    }
  }

  double term() {
    double v = unary();
    while (true) {
      if (accept("*") || accept("\\times") || accept("\\cdot")) {
        v *= unary();
      } else if (accept("/") || accept("\\div")) {
        double d = unary();
        if (d == 0.0) throw ParseFailure{};
        v /= d;
      } else if (starts_primary()) {
        v *= power();
      } else {
        return v;
      }
    }
  }

  double unary() {
    if (accept("-")) return -unary();
    if (accept("+")) return unary();
    return power();
  }

  double power() {
    double base = primary();
    if (accept("^")) {
      double exponent;
      if (accept("-")) {
        exponent = -power();
      } else if (accept("+")) {
        exponent = power();
      } else {
        exponent = power();
      }
      return std::pow(base, exponent);
    }
    return base;
  }

  // Argument of \frac / \sqrt: a brace group or a single digit or command.
  double argument() {
    if (peek() == '{') {
      ++pos_;
      double v = expr();
      expect('}');
      return v;
    }
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      double v = peek() - '0';
      ++pos_;
      return v;
    }
    if (accept("\\pi")) return std::numbers::pi;
    throw ParseFailure{};
  }

  double primary() {
    if (at_end()) throw ParseFailure{};
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (c == '(') {
      ++pos_;
      double v = expr();
      expect(')');
      return v;
    }
    if (c == '{') {
      ++pos_;
      double v = expr();
      expect('}');
      return v;
    }
    if (accept("\\frac")) {
      double n = argument();
      double d = argument();
      if (d == 0.0) throw ParseFailure{};
      return n / d;
    }
    if (accept("\\sqrt")) {
      double index = 2.0;
      if (accept("[")) {
        index = expr();
        expect(']');
      }
      double radicand = argument();
      return root(radicand, index);
    }
    if (accept("sqrt")) {
      double radicand;
      if (peek() == '(') {
        ++pos_;
        radicand = expr();
        expect(')');
      } else {
        radicand = argument();
      }
      return root(radicand, 2.0);
    }
    if (accept("\\pi") || accept("pi")) return std::numbers::pi;
    throw ParseFailure{};
  }

  static double root(double radicand, double index) {
    if (index == 0.0) throw ParseFailure{};
    if (radicand < 0.0) {
      double rounded = std::round(index);
      if (rounded != index || static_cast<long long>(rounded) % 2 == 0) throw ParseFailure{};
      return -std::pow(-radicand, 1.0 / index);
    }
    return std::pow(radicand, 1.0 / index);
  }

  double number() {
    std::size_t start = pos_;
    bool dot = false;
    while (!at_end()) {
      char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '.' && !dot) {
        dot = true;
        ++pos_;
      } else {
        break;
      }
    }
    std::string_view text = s_.substr(start, pos_ - start);
    if (text == ".") throw ParseFailure{};
    return std::stod(std::string(text));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<double> evaluate_expression(std::string_view normalized) {
  if (normalized.empty()) return std::nullopt;
  try {
    double v = ExpressionParser(normalized).parse();
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const ParseFailure&) {
    return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace cdg

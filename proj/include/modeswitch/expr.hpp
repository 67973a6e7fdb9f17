// Single-variable arithmetic expressions for model coefficients.
//
// Grammar (whitespace ignored):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary ('*' unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' integer)?
//   primary := number | 'x' | '(' expr ')' | '|' expr '|'
//
// Every expression is a polynomial in x and |x|, so its growth degree is a
// syntactic property of the tree.
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace modeswitch {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Coefficients of an expression that is exactly `constant + slope * x`.
struct AffineForm {
  double constant = 0.0;
  double slope = 0.0;
};

/// Immutable parsed expression. Stored as a postfix program, which makes
/// evaluation a flat loop and lets copies share nothing mutable.
class Expr {
 public:
  enum class Op : std::uint8_t { Const, Var, Abs, Pow, Add, Sub, Mul, Neg };

  struct Node {
    Op op;
    double value = 0.0;        // Const
    unsigned exponent = 0;     // Pow
  };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double c) {
    Expr e(std::vector<Node>{Node{Op::Const, c, 0}});
    return e;
  }
  static Expr variable() { return Expr(std::vector<Node>{Node{Op::Var, 0.0, 0}}); }

  static Expr parse(std::string_view text);

  /// Builds an expression directly from a postfix node sequence. Throws
  /// std::invalid_argument if the sequence does not describe a single tree.
  static Expr from_postfix(std::vector<Node> nodes) { return Expr(std::move(nodes)); }

  double operator()(double x) const { return evaluate(x); }

  double evaluate(double x) const {
    std::array<double, 32> small{};
    std::vector<double> big;
    double* stack = small.data();
    if (depth_ > small.size()) {
      big.resize(depth_);
      stack = big.data();
    }
    std::size_t top = 0;
    for (const Node& n : nodes_) {
      switch (n.op) {
        case Op::Const: stack[top++] = n.value; break;
        case Op::Var: stack[top++] = x; break;
        case Op::Abs: stack[top - 1] = stack[top - 1] < 0.0 ? -stack[top - 1] : stack[top - 1]; break;
        case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
        case Op::Pow: {
          const double base = stack[top - 1];
          double acc = 1.0;
          for (unsigned k = 0; k < n.exponent; ++k) acc *= base;
          stack[top - 1] = acc;
          break;
        }
        case Op::Add: --top; stack[top - 1] = stack[top - 1] + stack[top]; break;
        case Op::Sub: --top; stack[top - 1] = stack[top - 1] - stack[top]; break;
        case Op::Mul: --top; stack[top - 1] = stack[top - 1] * stack[top]; break;
      }
    }
    return stack[0];
  }

  /// Syntactic total degree in (x, |x|).
  unsigned growth_degree() const {
    std::vector<unsigned> st;
    for (const Node& n : nodes_) {
      switch (n.op) {
        case Op::Const: st.push_back(0); break;
        case Op::Var: st.push_back(1); break;
        case Op::Abs:
        case Op::Neg: break;
        case Op::Pow: st.back() *= n.exponent; break;
        case Op::Add:
        case Op::Sub: {
          const unsigned r = st.back();
          st.pop_back();
          st.back() = std::max(st.back(), r);
          break;
        }
        case Op::Mul: {
          const unsigned r = st.back();
          st.pop_back();
          st.back() += r;
          break;
        }
      }
    }
    return st.back();
  }

  /// Returns (c0, c1) when the expression is exactly c0 + c1 x as a
  /// polynomial, with no absolute value of an x-dependent subterm.
  std::optional<AffineForm> affine_form() const {
    // Each entry is a polynomial of degree <= 1, or nullopt once that fails.
    using Poly = std::optional<std::pair<double, double>>;
    std::vector<Poly> st;
    for (const Node& n : nodes_) {
      switch (n.op) {
        case Op::Const: st.emplace_back(std::pair{n.value, 0.0}); break;
        case Op::Var: st.emplace_back(std::pair{0.0, 1.0}); break;
        case Op::Abs:
          if (st.back() && st.back()->second == 0.0) {
            st.back()->first = st.back()->first < 0 ? -st.back()->first : st.back()->first;
          } else {
            st.back().reset();
          }
          break;
        case Op::Neg:
          if (st.back()) st.back() = std::pair{-st.back()->first, -st.back()->second};
          break;
        case Op::Pow: {
          Poly& p = st.back();
          if (!p) break;
          if (n.exponent == 0) {
            p = std::pair{1.0, 0.0};
          } else if (p->second == 0.0) {
            double acc = 1.0;
            for (unsigned k = 0; k < n.exponent; ++k) acc *= p->first;
            p = std::pair{acc, 0.0};
          } else if (n.exponent != 1) {
            p.reset();
          }
          break;
        }
        case Op::Add:
        case Op::Sub: {
          Poly r = st.back();
          st.pop_back();
          Poly& l = st.back();
          if (!l || !r) {
            l.reset();
          } else {
            const double s = n.op == Op::Add ? 1.0 : -1.0;
            l = std::pair{l->first + s * r->first, l->second + s * r->second};
          }
          break;
        }
        case Op::Mul: {
          Poly r = st.back();
          st.pop_back();
          Poly& l = st.back();
          if (!l || !r || (l->second != 0.0 && r->second != 0.0)) {
            l.reset();
          } else {
            l = std::pair{l->first * r->first, l->first * r->second + l->second * r->first};
          }
          break;
        }
      }
    }
    if (!st.back()) return std::nullopt;
    return AffineForm{st.back()->first, st.back()->second};
  }

  bool depends_on_x() const {
    return std::any_of(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.op == Op::Var; });
  }

  /// Fully parenthesized text that parses back to an expression with
  /// bitwise-identical evaluation.
  std::string to_string() const {
    std::vector<std::string> st;
    for (const Node& n : nodes_) {
      switch (n.op) {
        case Op::Const: st.push_back(format_number(n.value)); break;
        case Op::Var: st.emplace_back("x"); break;
        case Op::Abs: st.back() = "|" + st.back() + "|"; break;
        case Op::Neg: st.back() = "(-" + st.back() + ")"; break;
        case Op::Pow: st.back() = "(" + st.back() + ")^" + std::to_string(n.exponent); break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul: {
          std::string r = std::move(st.back());
          st.pop_back();
          const char sym = n.op == Op::Add ? '+' : n.op == Op::Sub ? '-' : '*';
          st.back() = "(" + st.back() + " " + sym + " " + r + ")";
          break;
        }
      }
    }
    return st.back();
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  explicit Expr(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
    std::size_t top = 0;
    for (const Node& n : nodes_) {
      switch (n.op) {
        case Op::Const:
        case Op::Var: ++top; break;
        case Op::Abs:
        case Op::Neg:
        case Op::Pow:
          if (top < 1) throw std::invalid_argument("malformed postfix expression");
          break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
          if (top < 2) throw std::invalid_argument("malformed postfix expression");
          --top;
          break;
      }
      depth_ = std::max(depth_, top);
    }
    if (top != 1) throw std::invalid_argument("malformed postfix expression");
  }

  static std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v < 0 ? -v : v);
    std::string s(buf.data(), end);
    return v < 0 || (v == 0.0 && std::signbit(v)) ? "(-" + s + ")" : s;
  }

  std::vector<Node> nodes_;
  std::size_t depth_ = 0;
};

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : text_(text) {}

  std::vector<Expr::Node> run() {
    if (text_.empty()) throw ParseError("empty expression", 0);
    for (std::size_t i = 0; i < text_.size(); ++i) {
      if (static_cast<unsigned char>(text_[i]) > 127) throw ParseError("non-ASCII character", i);
    }
    parse_expr();
    skip_ws();
    if (pos_ != text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return std::move(out_);
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void emit(Expr::Op op, double v = 0.0, unsigned e = 0) { out_.push_back({op, v, e}); }

  void parse_expr() {
    parse_term();
    for (char c = peek(); c == '+' || c == '-'; c = peek()) {
      ++pos_;
      parse_term();
      emit(c == '+' ? Expr::Op::Add : Expr::Op::Sub);
    }
  }

  void parse_term() {
    parse_unary();
    while (peek() == '*') {
      ++pos_;
      parse_unary();
      emit(Expr::Op::Mul);
    }
  }

  void parse_unary() {
    if (peek() == '-') {
      ++pos_;
      parse_unary();
      emit(Expr::Op::Neg);
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (peek() != '^') return;
    ++pos_;
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_;
    const bool fractional = pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E');
    if (start == pos_ || fractional) {
      throw ParseError("exponent must be a non-negative integer literal", start);
    }
    unsigned exponent = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, exponent);
    if (ec != std::errc()) throw ParseError("exponent out of range", start);
    emit(Expr::Op::Pow, 0.0, exponent);
    if (peek() == '^') throw ParseError("chained '^' is ambiguous; use parentheses", pos_);
  }

  void parse_primary() {
    const char c = peek();
    const std::size_t at = pos_;
    if (c == 'x') {
      ++pos_;
      emit(Expr::Op::Var);
    } else if (c == '(') {
      ++pos_;
      parse_expr();
      if (peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
    } else if (c == '|') {
      ++pos_;
      parse_expr();
      if (peek() != '|') throw ParseError("expected closing '|'", pos_);
      ++pos_;
      emit(Expr::Op::Abs);
    } else if ((c >= '0' && c <= '9') || c == '.') {
      parse_number();
    } else if (c == '\0') {
      throw ParseError("unexpected end of expression", at);
    } else {
      throw ParseError(std::string("unexpected '") + c + "'", at);
    }
  }

  void parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      const std::size_t s = pos_;
      while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_;
      return pos_ - s;
    };
    std::size_t n = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) throw ParseError("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError("malformed exponent in number", start);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_) throw ParseError("malformed number", start);
    emit(Expr::Op::Const, value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Expr::Node> out_;
};

}  // namespace detail

inline Expr Expr::parse(std::string_view text) {
  return Expr(detail::ExprParser(text).run());
}

}  // namespace modeswitch

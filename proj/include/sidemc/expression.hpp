#pragma once
//
// Small arithmetic expression language for coefficient fields read from
// configuration files. Variables: t, x1..x_{d1}, z. Operators + - * / ^
// (power is right-associative and binds tighter than unary minus).
// Functions: sin cos exp tanh abs sqrt (one argument), min max (two).
// Parsing is recursive descent; every error carries a line/column position.
// Printing is fully parenthesized; parse(print(e)) reproduces the AST.
//

#include <charconv>
#include <cmath>
#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "sidemc/common.hpp"

namespace sidemc {

/// Configuration-text error with a 1-based position.
class ParseError : public ConfigurationError {
 public:
  ParseError(const std::string& what, int line, int column)
      : ConfigurationError(what + " (line " + std::to_string(line) +
                           ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  enum class Kind { number, variable, negate, binary, call };
  Kind kind = Kind::number;
  double value = 0.0;       ///< number
  std::string name;         ///< variable or function name
  int var_index = -1;       ///< 0 = t, 1..d1 = x_i, d1+1 = z
  char op = 0;              ///< binary operator
  std::vector<ExprPtr> args;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool node_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case ExprNode::Kind::number:
      // bit-for-bit: the printer uses shortest round-trip decimals
      return a->value == b->value ||
             (std::isnan(a->value) && std::isnan(b->value));
    case ExprNode::Kind::variable:
      return a->name == b->name;
    case ExprNode::Kind::negate:
      return node_equal(a->args[0], b->args[0]);
    case ExprNode::Kind::binary:
      return a->op == b->op && node_equal(a->args[0], b->args[0]) &&
             node_equal(a->args[1], b->args[1]);
    case ExprNode::Kind::call:
      if (a->name != b->name || a->args.size() != b->args.size()) return false;
      for (std::size_t i = 0; i < a->args.size(); ++i) {
        if (!node_equal(a->args[i], b->args[i])) return false;
      }
      return true;
  }
  return false;
}

inline void print_node(const ExprPtr& n, std::string& out) {
  switch (n->kind) {
    case ExprNode::Kind::number:
      out += format_double(n->value);
      return;
    case ExprNode::Kind::variable:
      out += n->name;
      return;
    case ExprNode::Kind::negate:
      out += "(-";
      print_node(n->args[0], out);
      out += ')';
      return;
    case ExprNode::Kind::binary:
      out += '(';
      print_node(n->args[0], out);
      out += n->op;
      print_node(n->args[1], out);
      out += ')';
      return;
    case ExprNode::Kind::call:
      out += n->name;
      out += '(';
      for (std::size_t i = 0; i < n->args.size(); ++i) {
        if (i > 0) out += ',';
        print_node(n->args[i], out);
      }
      out += ')';
      return;
  }
}

}  // namespace detail

/// A parsed expression over (t, x, z).
class Expression {
 public:
  Expression() = default;
  explicit Expression(ExprPtr root) : root_(std::move(root)) {}

  bool empty() const { return root_ == nullptr; }
  const ExprPtr& root() const { return root_; }

  double eval(double t, const Vec& x, double z) const {
    if (!root_) throw EvaluationError("Expression: evaluating empty expression");
    return eval_node(root_, t, x, z);
  }

  /// Fully parenthesized canonical text.
  std::string print() const {
    if (!root_) return "0";
    std::string out;
    detail::print_node(root_, out);
    return out;
  }

  bool equal(const Expression& other) const {
    if (!root_ || !other.root_) return root_ == other.root_;
    return detail::node_equal(root_, other.root_);
  }

  /// True if the expression references any x_i.
  bool depends_on_x() const { return depends(root_, 1); }
  /// True if the expression references z (variable code 2) or t (code 0).
  bool depends_on_z() const { return depends(root_, 2); }
  bool depends_on_t() const { return depends(root_, 0); }

  /// Structurally the literal 0 (possibly negated).
  bool is_literal_zero() const {
    const ExprNode* n = root_.get();
    while (n != nullptr && n->kind == ExprNode::Kind::negate) {
      n = n->args[0].get();
    }
    return n != nullptr && n->kind == ExprNode::Kind::number && n->value == 0.0;
  }

 private:
  // codes: 0 = t, 1 = any x_i, 2 = z
  static bool depends(const ExprPtr& n, int code) {
    if (!n) return false;
    if (n->kind == ExprNode::Kind::variable) {
      if (code == 0) return n->name == "t";
      if (code == 2) return n->name == "z";
      return n->name.size() > 1 && n->name[0] == 'x';
    }
    for (const ExprPtr& a : n->args) {
      if (depends(a, code)) return true;
    }
    return false;
  }

  static double eval_node(const ExprPtr& n, double t, const Vec& x, double z) {
    switch (n->kind) {
      case ExprNode::Kind::number:
        return n->value;
      case ExprNode::Kind::variable:
        if (n->var_index == 0) return t;
        if (n->var_index < 0) return z;
        if (n->var_index > x.size()) {
          throw EvaluationError("Expression: variable " + n->name +
                                " out of range for the state dimension");
        }
        return x[n->var_index - 1];
      case ExprNode::Kind::negate:
        return -eval_node(n->args[0], t, x, z);
      case ExprNode::Kind::binary: {
        const double a = eval_node(n->args[0], t, x, z);
        const double b = eval_node(n->args[1], t, x, z);
        switch (n->op) {
          case '+': return a + b;
          case '-': return a - b;
          case '*': return a * b;
          case '/':
            if (b == 0.0) {
              throw EvaluationError("Expression: division by zero");
            }
            return a / b;
          case '^': return std::pow(a, b);
          default: break;
        }
        throw EvaluationError("Expression: unknown operator");
      }
      case ExprNode::Kind::call: {
        const double a = eval_node(n->args[0], t, x, z);
        if (n->name == "sin") return std::sin(a);
        if (n->name == "cos") return std::cos(a);
        if (n->name == "exp") return std::exp(a);
        if (n->name == "tanh") return std::tanh(a);
        if (n->name == "abs") return std::abs(a);
        if (n->name == "sqrt") return std::sqrt(a);
        const double b = eval_node(n->args[1], t, x, z);
        if (n->name == "min") return std::min(a, b);
        return std::max(a, b);
      }
    }
    throw EvaluationError("Expression: malformed node");
  }

  ExprPtr root_;
};

namespace detail {

class ExprParser {
 public:
  ExprParser(const std::string& text, int d1, int line, int column_offset)
      : text_(text), d1_(d1), line_(line), col0_(column_offset) {}

  ExprPtr parse() {
    skip_ws();
    if (pos_ >= text_.size()) fail("empty expression");
    ExprPtr e = parse_sum();
    skip_ws();
    if (pos_ < text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression: " + what, line_,
                     col0_ + static_cast<int>(pos_) + 1);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  ExprPtr parse_sum() {
    ExprPtr lhs = parse_product();
    for (;;) {
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      lhs = make_binary(c, lhs, parse_product());
    }
  }

  ExprPtr parse_product() {
    ExprPtr lhs = parse_unary();
    for (;;) {
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      lhs = make_binary(c, lhs, parse_unary());
    }
  }

  ExprPtr parse_unary() {
    if (eat('-')) {
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprNode::Kind::negate;
      n->args.push_back(parse_unary());
      return n;
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (peek() == '^') {
      ++pos_;
      // right-associative; the exponent may carry a unary minus
      return make_binary('^', base, parse_unary());
    }
    return base;
  }

  ExprPtr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("expected a value");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      ExprPtr e = parse_sum();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return parse_number();
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  ExprPtr parse_number() {
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double v = 0.0;
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{}) fail("malformed number");
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::number;
    n->value = v;
    return n;
  }

  ExprPtr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name = text_.substr(start, pos_ - start);
    if (peek() == '(') {
      ++pos_;
      const int arity = (name == "min" || name == "max") ? 2 : 1;
      const bool known =
          name == "sin" || name == "cos" || name == "exp" || name == "tanh" ||
          name == "abs" || name == "sqrt" || name == "min" || name == "max";
      if (!known) {
        pos_ = start;
        fail("unknown function '" + name + "'");
      }
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprNode::Kind::call;
      n->name = name;
      n->args.push_back(parse_sum());
      for (int i = 1; i < arity; ++i) {
        if (!eat(',')) fail("expected ','");
        n->args.push_back(parse_sum());
      }
      if (!eat(')')) fail("expected ')'");
      return n;
    }
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::variable;
    n->name = name;
    if (name == "t") {
      n->var_index = 0;
    } else if (name == "z") {
      n->var_index = -1;
    } else if (name.size() > 1 && name[0] == 'x') {
      int idx = 0;
      const auto res = std::from_chars(name.data() + 1,
                                       name.data() + name.size(), idx);
      if (res.ec != std::errc{} || res.ptr != name.data() + name.size() ||
          idx < 1 || idx > d1_) {
        pos_ = start;
        fail("unknown variable '" + name + "' (state dimension " +
             std::to_string(d1_) + ")");
      }
      n->var_index = idx;
    } else {
      pos_ = start;
      fail("unknown variable '" + name + "'");
    }
    return n;
  }

  static ExprPtr make_binary(char op, ExprPtr lhs, ExprPtr rhs) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::binary;
    n->op = op;
    n->args.push_back(std::move(lhs));
    n->args.push_back(std::move(rhs));
    return n;
  }

  const std::string& text_;
  int d1_;
  int line_;
  int col0_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parse one expression. `line` and `column_offset` locate the text inside
/// a larger document for error reporting.
inline Expression parse_expression(const std::string& text, int d1,
                                   int line = 1, int column_offset = 0) {
  return Expression(detail::ExprParser(text, d1, line, column_offset).parse());
}

}  // namespace sidemc

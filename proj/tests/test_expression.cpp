// Tests for the coefficient expression language: golden-table agreement
// with an independent reference evaluator, grammar structure, the
// parse-print-parse identity, and positioned error reporting.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sidemc/expression.hpp"

using namespace sidemc;

TEST_CASE("golden table: 200 reference cases agree") {
  std::ifstream in(std::string(SIDEMC_GOLDEN_DIR) + "/expression_golden.csv");
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "expression;t;x1;x2;z;value");
  int n = 0;
  std::string row;
  while (std::getline(in, row)) {
    std::stringstream ss(row);
    std::string expr_text, field;
    std::getline(ss, expr_text, ';');
    double vals[5];
    for (double& v : vals) {
      std::getline(ss, field, ';');
      v = std::stod(field);
    }
    Vec x(2);
    x << vals[1], vals[2];
    const Expression e = parse_expression(expr_text, 2);
    const double got = e.eval(vals[0], x, vals[3]);
    INFO("case " << n << ": " << expr_text);
    REQUIRE(got == Catch::Approx(vals[4]).epsilon(1e-13).margin(1e-13));
    ++n;
  }
  REQUIRE(n == 200);
}

TEST_CASE("product chain parses into left-nested factors") {
  const Expression e = parse_expression("0.4*sin(x1)*z", 1);
  const ExprPtr& root = e.root();
  REQUIRE(root->kind == ExprNode::Kind::binary);
  REQUIRE(root->op == '*');
  REQUIRE(root->args[1]->name == "z");
  const ExprPtr& inner = root->args[0];
  REQUIRE(inner->op == '*');
  REQUIRE(inner->args[0]->value == 0.4);
  REQUIRE(inner->args[1]->name == "sin");
}

TEST_CASE("precedence and associativity") {
  Vec x(1);
  x << 2.0;
  // power binds tighter than unary minus and is right-associative
  REQUIRE(parse_expression("-x1^2", 1).eval(0, x, 0) == -4.0);
  REQUIRE(parse_expression("2^-2", 1).eval(0, x, 0) == 0.25);
  REQUIRE(parse_expression("2^3^2", 1).eval(0, x, 0) == 512.0);
  REQUIRE(parse_expression("4-2-1", 1).eval(0, x, 0) == 1.0);
  REQUIRE(parse_expression("8/4/2", 1).eval(0, x, 0) == 1.0);
  REQUIRE(parse_expression("1+2*3", 1).eval(0, x, 0) == 7.0);
}

TEST_CASE("parse-print-parse is the identity on the AST") {
  const std::vector<std::string> cases = {
      "1", "-2.5", "t", "x1+x2*z", "-x1^2", "sin(x1+t)-cos(x2-z)",
      "min(abs(x1),max(x2,z))^2", "sqrt(1+x1^2)", "exp(-x1^2/2)",
      "tanh(3*x1)", "(x1+x2)/(3+t)", "2^-2", "1/(1+exp(-x1))"};
  for (const std::string& text : cases) {
    const Expression a = parse_expression(text, 2);
    const Expression b = parse_expression(a.print(), 2);
    INFO(text << " -> " << a.print());
    REQUIRE(a.equal(b));
    REQUIRE(a.print() == b.print());
  }
}

TEST_CASE("dependence analysis") {
  const Expression e = parse_expression("0.4*sin(x1)*z", 2);
  REQUIRE(e.depends_on_x());
  REQUIRE(e.depends_on_z());
  REQUIRE_FALSE(e.depends_on_t());
  const Expression f = parse_expression("t+1", 2);
  REQUIRE_FALSE(f.depends_on_x());
  REQUIRE(f.depends_on_t());
  REQUIRE(parse_expression("0", 1).is_literal_zero());
  REQUIRE(parse_expression("-(0)", 1).is_literal_zero());
  REQUIRE_FALSE(parse_expression("x1-x1", 1).is_literal_zero());
}

TEST_CASE("errors carry positions") {
  SECTION("dangling operator") {
    try {
      parse_expression("t+", 1);
      FAIL("expected ParseError");
    } catch (const ParseError& err) {
      REQUIRE(err.line() == 1);
      REQUIRE(err.column() == 3);
    }
  }
  SECTION("line and column offsets propagate") {
    try {
      parse_expression("t+*2", 1, 7, 10);
      FAIL("expected ParseError");
    } catch (const ParseError& err) {
      REQUIRE(err.line() == 7);
      REQUIRE(err.column() > 10);
    }
  }
  SECTION("unknown function") {
    REQUIRE_THROWS_AS(parse_expression("foo(x1)", 1), ParseError);
  }
  SECTION("variable beyond the state dimension") {
    REQUIRE_THROWS_AS(parse_expression("x3", 2), ParseError);
    REQUIRE_NOTHROW(parse_expression("x2", 2));
  }
  SECTION("unbalanced parenthesis") {
    REQUIRE_THROWS_AS(parse_expression("(x1", 1), ParseError);
  }
  SECTION("empty input") {
    REQUIRE_THROWS_AS(parse_expression("   ", 1), ParseError);
  }
  SECTION("division by zero is an evaluation error") {
    const Expression e = parse_expression("1/x1", 1);
    REQUIRE_THROWS_AS(e.eval(0.0, Vec::Zero(1), 0.0), EvaluationError);
  }
}

#include <map>

#include "doctest.h"
#include "gestimate/error.hpp"
#include "gestimate/expr.hpp"

using namespace gestimate;

namespace {

// A[t] = t + 1, Y[t] = 10 t, covariate j at t = 100 j + t
struct Table : VariableSource {
  double value(VarKind kind, int covariate, int time) const override {
    switch (kind) {
      case VarKind::treatment: return time + 1.0;
      case VarKind::outcome: return 10.0 * time;
      case VarKind::covariate: return 100.0 * covariate + time;
      case VarKind::time: return 0.5 * time;
    }
    return 0.0;
  }
};

const Symbols symbols{{"L", "W"}};

double eval(const char* text, int m, int k = -1) { return Expression::parse(text, symbols).eval(Table{}, m, k); }

}  // namespace

TEST_SUITE("expr") {
  TEST_CASE("arithmetic and precedence") {
    CHECK(eval("1 + 2 * 3", 0) == 7.0);
    CHECK(eval("(1 + 2) * 3", 0) == 9.0);
    CHECK(eval("-2 * -3", 0) == 6.0);
    CHECK(eval("8 / 4 / 2", 0) == 1.0);
    CHECK(eval("2 - 3 - 4", 0) == -5.0);
  }

  TEST_CASE("variables, indices and comparisons") {
    CHECK(eval("A", 2) == 3.0);
    CHECK(eval("A[0]", 2) == 1.0);
    CHECK(eval("A[m-1]", 2) == 2.0);
    CHECK(eval("W", 1) == 101.0);
    CHECK(eval("L[1]", 3) == 1.0);
    CHECK(eval("L0", 3) == 0.0);
    CHECK(eval("Y[k]", 0, 2) == 20.0);
    CHECK(eval("L[1] > 0", 1) == 1.0);
    CHECK(eval("L[0] > 0", 1) == 0.0);
    CHECK(eval("W <= 100", 0) == 1.0);
    CHECK(eval("A * (W >= 101)", 1) == 2.0);
  }

  TEST_CASE("malformed input is rejected") {
    for (const char* bad : {"", "1 +", "(1", "Z", "A[", "L[x]", "1 2", "*3"})
      CHECK_THROWS_AS(Expression::parse(bad, symbols), Error);
  }

  TEST_CASE("structure queries") {
    auto e = Expression::parse("A[0] * L + 2 * A[0]", symbols);
    auto is_a0 = [](const VarRef& r) { return r.kind == VarKind::treatment && r.base == IndexBase::absolute && r.offset == 0; };
    CHECK(e.has_factor(is_a0));
    CHECK_FALSE(Expression::parse("A[0] + L", symbols).has_factor(is_a0));
    CHECK(Expression::parse("3", symbols).is_constant());
    CHECK_FALSE(e.is_constant());
    CHECK(Expression::constant(2.5).eval(Table{}, 0) == 2.5);
  }
}

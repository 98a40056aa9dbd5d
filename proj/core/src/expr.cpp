#include "gestimate/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "gestimate/error.hpp"

namespace gestimate {

int VarRef::resolve(int m, int k) const {
  switch (base) {
    case IndexBase::absolute:
      return offset;
    case IndexBase::current:
      return m + offset;
    case IndexBase::target:
      if (k < 0) throw DataError("expression uses index k outside a blip term");
      return k + offset;
  }
  return offset;
}

int Symbols::covariate_index(std::string_view name) const {
  for (std::size_t j = 0; j < covariates.size(); ++j)
    if (covariates[j] == name) return static_cast<int>(j);
  return -1;
}

enum class Op { constant, var, neg, add, sub, mul, div, lt, gt, le, ge };

struct Expression::Node {
  Op op = Op::constant;
  double value = 0.0;
  VarRef ref;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make_const(double v) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::constant;
  n->value = v;
  return n;
}

NodePtr make_bin(Op op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

class Parser {
 public:
  Parser(std::string_view s, const Symbols& sym) : s_(s), sym_(sym) {}

  NodePtr parse() {
    auto n = comparison();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  std::string_view s_;
  const Symbols& sym_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression '" + std::string(s_) + "': " + what);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(std::string_view tok) {
    skip();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  NodePtr comparison() {
    auto lhs = sum();
    skip();
    if (eat("<=")) return make_bin(Op::le, lhs, sum());
    if (eat(">=")) return make_bin(Op::ge, lhs, sum());
    if (eat("<")) return make_bin(Op::lt, lhs, sum());
    if (eat(">")) return make_bin(Op::gt, lhs, sum());
    return lhs;
  }

  NodePtr sum() {
    auto n = product();
    for (;;) {
      if (eat("+"))
        n = make_bin(Op::add, n, product());
      else if (eat("-"))
        n = make_bin(Op::sub, n, product());
      else
        return n;
    }
  }

  NodePtr product() {
    auto n = unary();
    for (;;) {
      if (eat("*"))
        n = make_bin(Op::mul, n, unary());
      else if (eat("/"))
        n = make_bin(Op::div, n, unary());
      else
        return n;
    }
  }

  NodePtr unary() {
    if (eat("-")) {
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::neg;
      n->lhs = unary();
      return n;
    }
    if (eat("+")) return unary();
    return primary();
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      auto n = comparison();
      if (!eat(")")) fail("missing ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return variable();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' || s_[pos_] == 'e' ||
            s_[pos_] == 'E' ||
            ((s_[pos_] == '-' || s_[pos_] == '+') && pos_ > start && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E'))))
      ++pos_;
    double v = 0.0;
    auto res = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != s_.data() + pos_) fail("bad number");
    return make_const(v);
  }

  int integer() {
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer index");
    int v = 0;
    std::from_chars(s_.data() + start, s_.data() + pos_, v);
    return v;
  }

  // name -> (kind, covariate); false when unknown
  bool lookup(std::string_view name, VarKind& kind, int& cov) const {
    if (name == "A") {
      kind = VarKind::treatment;
      return true;
    }
    if (name == "Y") {
      kind = VarKind::outcome;
      return true;
    }
    if (name == "t") {
      kind = VarKind::time;
      return true;
    }
    cov = sym_.covariate_index(name);
    if (cov >= 0) {
      kind = VarKind::covariate;
      return true;
    }
    return false;
  }

  NodePtr variable() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    std::string_view name = s_.substr(start, pos_ - start);

    VarRef ref;
    if (!lookup(name, ref.kind, ref.covariate)) {
      // trailing digits give an absolute index: L0, A1, Y2
      std::size_t d = name.size();
      while (d > 0 && std::isdigit(static_cast<unsigned char>(name[d - 1]))) --d;
      if (d == name.size() || d == 0 || !lookup(name.substr(0, d), ref.kind, ref.covariate))
        fail("unknown variable '" + std::string(name) + "'");
      ref.base = IndexBase::absolute;
      std::from_chars(name.data() + d, name.data() + name.size(), ref.offset);
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::var;
      n->ref = ref;
      return n;
    }

    ref.base = IndexBase::current;
    ref.offset = 0;
    if (eat("[")) {
      skip();
      if (pos_ < s_.size() && (s_[pos_] == 'm' || s_[pos_] == 'k')) {
        ref.base = s_[pos_] == 'm' ? IndexBase::current : IndexBase::target;
        ++pos_;
        if (eat("+"))
          ref.offset = integer();
        else if (eat("-"))
          ref.offset = -integer();
      } else {
        ref.base = IndexBase::absolute;
        ref.offset = integer();
      }
      if (!eat("]")) fail("missing ']'");
    }
    auto n = std::make_shared<Expression::Node>();
    n->op = Op::var;
    n->ref = ref;
    return n;
  }
};

double eval_node(const Expression::Node& n, const VariableSource& src, int m, int k) {
  switch (n.op) {
    case Op::constant:
      return n.value;
    case Op::var:
      return src.value(n.ref.kind, n.ref.covariate, n.ref.resolve(m, k));
    case Op::neg:
      return -eval_node(*n.lhs, src, m, k);
    case Op::add:
      return eval_node(*n.lhs, src, m, k) + eval_node(*n.rhs, src, m, k);
    case Op::sub:
      return eval_node(*n.lhs, src, m, k) - eval_node(*n.rhs, src, m, k);
    case Op::mul:
      return eval_node(*n.lhs, src, m, k) * eval_node(*n.rhs, src, m, k);
    case Op::div:
      return eval_node(*n.lhs, src, m, k) / eval_node(*n.rhs, src, m, k);
    case Op::lt:
      return eval_node(*n.lhs, src, m, k) < eval_node(*n.rhs, src, m, k) ? 1.0 : 0.0;
    case Op::gt:
      return eval_node(*n.lhs, src, m, k) > eval_node(*n.rhs, src, m, k) ? 1.0 : 0.0;
    case Op::le:
      return eval_node(*n.lhs, src, m, k) <= eval_node(*n.rhs, src, m, k) ? 1.0 : 0.0;
    case Op::ge:
      return eval_node(*n.lhs, src, m, k) >= eval_node(*n.rhs, src, m, k) ? 1.0 : 0.0;
  }
  return 0.0;
}

bool factor_node(const Expression::Node& n, const std::function<bool(const VarRef&)>& pred) {
  switch (n.op) {
    case Op::constant:
      return n.value == 0.0;
    case Op::var:
      return pred(n.ref);
    case Op::neg:
      return factor_node(*n.lhs, pred);
    case Op::add:
    case Op::sub:
      return factor_node(*n.lhs, pred) && factor_node(*n.rhs, pred);
    case Op::mul:
      return factor_node(*n.lhs, pred) || factor_node(*n.rhs, pred);
    case Op::div:
      return factor_node(*n.lhs, pred);
    default:
      return false;
  }
}

bool refs_node(const Expression::Node& n, const std::function<bool(const VarRef&)>& pred) {
  if (n.op == Op::var) return pred(n.ref);
  if (n.lhs && refs_node(*n.lhs, pred)) return true;
  if (n.rhs && refs_node(*n.rhs, pred)) return true;
  return false;
}

}  // namespace

Expression::Expression() : root_(make_const(0.0)), text_("0") {}

Expression Expression::parse(std::string_view text, const Symbols& symbols) {
  Expression e;
  e.root_ = Parser(text, symbols).parse();
  e.text_ = std::string(text);
  return e;
}

Expression Expression::constant(double value) {
  Expression e;
  e.root_ = make_const(value);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  e.text_ = buf;
  return e;
}

double Expression::eval(const VariableSource& src, int m, int k) const { return eval_node(*root_, src, m, k); }

bool Expression::has_factor(const std::function<bool(const VarRef&)>& pred) const { return factor_node(*root_, pred); }

bool Expression::references(const std::function<bool(const VarRef&)>& pred) const { return refs_node(*root_, pred); }

bool Expression::is_constant() const {
  return !references([](const VarRef&) { return true; });
}

}  // namespace gestimate

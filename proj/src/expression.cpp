#include "ontic/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace ontic {

struct Expression::Node {
  enum class Op { number, variable, neg, add, sub, mul, div, pow, call } op = Op::number;
  double value = 0.0;
  int slot = -1;
  std::string fn;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;
using Op = Node::Op;

const std::map<std::string, int>& function_arity() {
  static const std::map<std::string, int> table = {
      {"sin", 1},  {"cos", 1},  {"tan", 1},  {"exp", 1},  {"log", 1},  {"sqrt", 1},  {"abs", 1},
      {"sinh", 1}, {"cosh", 1}, {"tanh", 1}, {"atan", 1}, {"atan2", 2}, {"pow", 2}};
  return table;
}

NodePtr make(Op op, std::vector<NodePtr> args = {}) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return n;
}

class Parser {
 public:
  Parser(const std::string& s, const Expression::Symbols& sym) : s_(s), sym_(sym) {}

  NodePtr run() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ExpressionError("expression '" + s_ + "' at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (eat('+'))
        lhs = make(Op::add, {lhs, term()});
      else if (eat('-'))
        lhs = make(Op::sub, {lhs, term()});
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (eat('*'))
        lhs = make(Op::mul, {lhs, unary()});
      else if (eat('/'))
        lhs = make(Op::div, {lhs, unary()});
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (eat('-')) return make(Op::neg, {unary()});
    if (eat('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (eat('^')) return make(Op::pow, {base, unary()});
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    if (eat('(')) {
      NodePtr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("bad number");
    pos_ += static_cast<std::size_t>(end - begin);
    auto n = std::make_shared<Node>();
    n->value = v;
    return n;
  }

  NodePtr name() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string id = s_.substr(start, pos_ - start);
    if (eat('(')) {
      const auto it = function_arity().find(id);
      if (it == function_arity().end()) fail("unknown function '" + id + "'");
      std::vector<NodePtr> args{expr()};
      while (eat(',')) args.push_back(expr());
      if (!eat(')')) fail("expected ')'");
      if (static_cast<int>(args.size()) != it->second) fail("wrong argument count for '" + id + "'");
      auto n = std::make_shared<Node>();
      n->op = Op::call;
      n->fn = id;
      n->args = std::move(args);
      return n;
    }
    auto n = std::make_shared<Node>();
    if (auto v = sym_.variables.find(id); v != sym_.variables.end()) {
      n->op = Op::variable;
      n->slot = v->second;
    } else if (auto k = sym_.constants.find(id); k != sym_.constants.end()) {
      n->value = k->second;
    } else if (id == "pi") {
      n->value = std::numbers::pi;
    } else {
      fail("unknown name '" + id + "'");
    }
    return n;
  }

  const std::string& s_;
  const Expression::Symbols& sym_;
  std::size_t pos_ = 0;
};

double eval(const Node& n, const double* x) {
  switch (n.op) {
    case Op::number: return n.value;
    case Op::variable: return x[n.slot];
    case Op::neg: return -eval(*n.args[0], x);
    case Op::add: return eval(*n.args[0], x) + eval(*n.args[1], x);
    case Op::sub: return eval(*n.args[0], x) - eval(*n.args[1], x);
    case Op::mul: return eval(*n.args[0], x) * eval(*n.args[1], x);
    case Op::div: return eval(*n.args[0], x) / eval(*n.args[1], x);
    case Op::pow: return std::pow(eval(*n.args[0], x), eval(*n.args[1], x));
    case Op::call: break;
  }
  const double a = eval(*n.args[0], x);
  const std::string& f = n.fn;
  if (f == "sin") return std::sin(a);
  if (f == "cos") return std::cos(a);
  if (f == "tan") return std::tan(a);
  if (f == "exp") return std::exp(a);
  if (f == "log") return std::log(a);
  if (f == "sqrt") return std::sqrt(a);
  if (f == "abs") return std::abs(a);
  if (f == "sinh") return std::sinh(a);
  if (f == "cosh") return std::cosh(a);
  if (f == "tanh") return std::tanh(a);
  if (f == "atan") return std::atan(a);
  const double b = eval(*n.args[1], x);
  if (f == "atan2") return std::atan2(a, b);
  return std::pow(a, b);
}

bool constant(const Node& n) {
  if (n.op == Op::variable) return false;
  return std::all_of(n.args.begin(), n.args.end(), [](const NodePtr& a) { return constant(*a); });
}

int degree(const Node& n, const std::function<bool(int)>& tracked) {
  constexpr int kBad = Expression::kNotPolynomial;
  auto d = [&](std::size_t i) { return degree(*n.args[i], tracked); };
  switch (n.op) {
    case Op::number: return 0;
    case Op::variable: return tracked(n.slot) ? 1 : 0;
    case Op::neg: return d(0);
    case Op::add:
    case Op::sub: return std::max(d(0), d(1));
    case Op::mul: return std::min(kBad, d(0) + d(1));
    case Op::div: return d(1) == 0 ? d(0) : kBad;
    case Op::pow: {
      const int base = d(0);
      if (base == 0 && d(1) == 0) return 0;
      if (base >= kBad || !constant(*n.args[1])) return kBad;
      const double e = eval(*n.args[1], nullptr);
      if (e < 0.0 || e != std::floor(e) || e > 64.0) return kBad;
      return std::min(kBad, base * static_cast<int>(e));
    }
    case Op::call:
      for (std::size_t i = 0; i < n.args.size(); ++i)
        if (d(i) != 0) return kBad;
      return 0;
  }
  return kBad;
}

bool uses_slot(const Node& n, int slot) {
  if (n.op == Op::variable && n.slot == slot) return true;
  return std::any_of(n.args.begin(), n.args.end(), [&](const NodePtr& a) { return uses_slot(*a, slot); });
}

}  // namespace

Expression Expression::parse(const std::string& text, const Symbols& symbols) {
  Expression e;
  e.root_ = Parser(text, symbols).run();
  e.text_ = text;
  return e;
}

double Expression::operator()(const double* vars) const { return eval(*root_, vars); }

int Expression::degree(const std::function<bool(int)>& is_tracked) const { return ontic::degree(*root_, is_tracked); }

bool Expression::uses(int slot) const { return uses_slot(*root_, slot); }

}  // namespace ontic

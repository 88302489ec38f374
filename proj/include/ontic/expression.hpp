#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ontic {

class ExpressionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Small arithmetic expression language for scenario files.
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('+' | '-') unary | power
///   power   := primary ('^' unary)?
///   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Functions: sin cos tan exp log sqrt abs sinh cosh tanh atan atan2 pow.
/// `pi` is predefined. Other names resolve through the caller's symbol table
/// to a variable slot or a fixed parameter value.
class Expression {
 public:
  struct Symbols {
    std::map<std::string, int> variables;    // name -> slot in the argument array
    std::map<std::string, double> constants;  // substituted at parse time
  };

  static Expression parse(const std::string& text, const Symbols& symbols);

  double operator()(const double* vars) const;
  double operator()(const std::vector<double>& vars) const { return (*this)(vars.data()); }

  /// Polynomial degree in the slots for which `is_tracked` is true, or
  /// kNotPolynomial if the expression is not polynomial in them.
  int degree(const std::function<bool(int)>& is_tracked) const;
  static constexpr int kNotPolynomial = 1 << 20;

  bool uses(int slot) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace ontic

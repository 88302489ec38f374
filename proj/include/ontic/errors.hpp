#pragma once

#include <stdexcept>
#include <string>

namespace ontic {

/// Base for numerical failures that abort a computation. Every error names
/// the module and operation it came from.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string module, std::string op, const std::string& what)
      : std::runtime_error(module + "::" + op + ": " + what), module_(std::move(module)), op_(std::move(op)) {}

  const std::string& module() const { return module_; }
  const std::string& op() const { return op_; }

 private:
  std::string module_;
  std::string op_;
};

/// The restricted momentum field diverges: rho vanishes where its gradient does not.
class NodeError : public NumericalError {
  using NumericalError::NumericalError;
};

class NonNormalizable : public NumericalError {
  using NumericalError::NumericalError;
};

/// A state is not spanned by the declared eigenbasis.
class SpanError : public NumericalError {
  using NumericalError::NumericalError;
};

/// Pointer packets overlap, so outcomes cannot be registered.
class OverlapError : public NumericalError {
  using NumericalError::NumericalError;
};

/// Characteristics crossed; the classical phase became multivalued.
class CausticError : public NumericalError {
  using NumericalError::NumericalError;
};

/// Norm drift or non-finite values during time stepping.
class InstabilityError : public NumericalError {
  using NumericalError::NumericalError;
};

class CflError : public NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace ontic

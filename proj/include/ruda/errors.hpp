#pragma once

#include <stdexcept>
#include <string>

namespace ruda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numeric function was evaluated outside its domain (log of a
/// non-positive value, overflowing exp, non-finite result).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input shorter or longer than its header announces.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A gradient update would write NaN/Inf into the parameters.
class PoisonedUpdateError : public Error {
 public:
  using Error::Error;
};

/// A dataset or batch became empty or otherwise unusable.
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Importance weights p_T/p_S requested where p_S vanishes but p_T does not.
class UnboundedWeightError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace ruda

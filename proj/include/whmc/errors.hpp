#pragma once

#include <stdexcept>
#include <string>

namespace whmc {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid model (reducible chain, non-stochastic matrix, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

// Quadrature non-convergence, singular systems, non-finite intermediates.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A truncated series or pmf could not reach the requested tail bound.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double achieved_tail)
      : Error(what), achieved_tail_(achieved_tail) {}
  double achieved_tail() const noexcept { return achieved_tail_; }

 private:
  double achieved_tail_;
};

// A distribution has no finite support (e.g. geometric with success prob 0).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Malformed or semantically invalid observations.
class DataError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace whmc

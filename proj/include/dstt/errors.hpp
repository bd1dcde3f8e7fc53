#pragma once

#include <stdexcept>
#include <string>

namespace dstt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed data, wrong shapes, invalid configuration. The CLI
/// maps these to exit code 1.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Failure while executing an otherwise valid request (I/O, divergence,
/// network). The CLI maps these to exit code 2.
class RuntimeFailure : public Error {
public:
  using Error::Error;
};

class DimensionError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class OrderingError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class RangeError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class SplitError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class EmptySequenceError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class DivergenceError : public RuntimeFailure {
public:
  DivergenceError(const std::string& what, long last_good_epoch = -1)
      : RuntimeFailure(what), last_good_epoch_(last_good_epoch) {}

  /// -1 when divergence happened before any epoch completed.
  long last_good_epoch() const noexcept { return last_good_epoch_; }

private:
  long last_good_epoch_;
};

class IoError : public RuntimeFailure {
public:
  using RuntimeFailure::RuntimeFailure;
};

class FetchError : public RuntimeFailure {
public:
  using RuntimeFailure::RuntimeFailure;
};

class CacheInvalidError : public RuntimeFailure {
public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace dstt

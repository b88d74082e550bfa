#ifndef SYMDEC_ERRORS_HPP
#define SYMDEC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace symdec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSYM files, manifests, annotation files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in a loss, gradient or activation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Scene placement gave up after the configured number of retries.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A metric that is undefined on the given split, e.g. recall with no positive pixels.
class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace symdec

#endif  // SYMDEC_ERRORS_HPP

#pragma once

#include <stdexcept>
#include <string>

namespace semref {

// Base of every error thrown by the library. The CLI maps these to a
// nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class OntologyError : public Error {
 public:
  OntologyError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace semref

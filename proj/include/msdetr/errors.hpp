#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace msdetr {

/// Base of every error raised by the library. The CLI maps ValidationError
/// (and its subclasses) to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg), issues_{msg} {}
  explicit ValidationError(std::vector<std::string> issues)
      : Error(join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out;
    for (const auto& s : issues) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> issues_;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IOError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace msdetr

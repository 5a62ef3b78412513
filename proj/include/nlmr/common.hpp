#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nlmr {

/// Dense integer id of a vocabulary entry (word or subword symbol).
using TokenId = std::int32_t;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent input data (files, corpora, n-best records).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input with a known line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite values during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nlmr

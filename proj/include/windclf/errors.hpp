#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace windclf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class VocabularyError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

class DegenerateSignalError : public Error {
 public:
  explicit DegenerateSignalError(std::string signal)
      : Error("signal '" + signal + "' is constant; cannot min-max normalize"),
        signal_(std::move(signal)) {}
  const std::string& signal() const noexcept { return signal_; }

 private:
  std::string signal_;
};

class AlignmentQualityError : public Error {
 public:
  AlignmentQualityError(std::string farm_id, double objective, double ceiling)
      : Error("alignment of farm '" + farm_id + "' is degenerate: objective " +
              std::to_string(objective) + " exceeds ceiling " + std::to_string(ceiling)),
        farm_id_(std::move(farm_id)) {}
  const std::string& farm_id() const noexcept { return farm_id_; }

 private:
  std::string farm_id_;
};

}  // namespace windclf

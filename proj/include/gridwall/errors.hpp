#pragma once

#include <stdexcept>
#include <string>

namespace gridwall {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (dimension mismatch, empty pool, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise undecodable action component.
class InvalidActionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a model curve.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Episode protocol violated, e.g. stepping a finished race.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, hash_mismatch, truncated, malformed };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training aborted; `diagnostics` is a JSON snapshot of the learner state at the failure.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::string diagnostics)
      : Error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

// Service-layer errors, mapped onto HTTP status classes by the console.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what) : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace gridwall

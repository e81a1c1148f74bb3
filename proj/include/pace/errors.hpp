#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pace {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed record in a persisted file. `record` is the zero-based record index
// (array element or JSONL line).
class SchemaError : public Error {
 public:
  SchemaError(std::size_t record, const std::string& what)
      : Error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class UnknownTemplate : public Error {
 public:
  explicit UnknownTemplate(const std::string& id) : Error("unknown template: " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class MissingBinding : public Error {
 public:
  explicit MissingBinding(const std::string& slot) : Error("missing binding: " + slot), slot_(slot) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

class ExtraBinding : public Error {
 public:
  explicit ExtraBinding(const std::string& slot) : Error("unexpected binding: " + slot), slot_(slot) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

// Provider failures. TransportError and RateLimited are transient and retried.
class ProviderError : public Error {
 public:
  using Error::Error;
};
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};
class RateLimited : public ProviderError {
 public:
  using ProviderError::ProviderError;
};
class MalformedResponse : public ProviderError {
 public:
  using ProviderError::ProviderError;
};
class ContentFiltered : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class StyleSimulationFailed : public Error {
 public:
  using Error::Error;
};
class StrategyFailed : public Error {
 public:
  using Error::Error;
};
class InvalidState : public Error {
 public:
  using Error::Error;
};

class BatchError : public Error {
 public:
  using Error::Error;
};
class InsufficientData : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};
class EmbedderError : public Error {
 public:
  using Error::Error;
};
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class JudgeParseFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace pace

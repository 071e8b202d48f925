#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (maps to the CLI's config exit code).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated sequencing or data contract between pipeline stages.
class ContractError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts, int http_status = 0)
      : Error(what), attempts_(attempts), http_status_(http_status) {}

  int attempts() const noexcept { return attempts_; }
  /// 0 when the failure happened below HTTP (connect, timeout, bad body).
  int http_status() const noexcept { return http_status_; }

 private:
  int attempts_;
  int http_status_;
};

class ScriptedGapError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class RoleMismatchError : public ContractError {
 public:
  using ContractError::ContractError;
};

class UndefinedRewardError : public ContractError {
 public:
  using ContractError::ContractError;
};

class SequencingError : public ContractError {
 public:
  using ContractError::ContractError;
};

class SchemaVersionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class AnnotationParseError : public Error {
 public:
  using Error::Error;
};

class CorpusLoadError : public Error {
 public:
  CorpusLoadError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cdg

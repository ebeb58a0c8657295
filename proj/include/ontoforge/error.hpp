#pragma once

#include <stdexcept>
#include <string>

namespace ontoforge {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kBackend = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kData; }
};

/// Bad flags, bad config values, unknown names.
class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

/// Malformed input files, failed validation, missing stage inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Anything that went wrong talking to a generation or embedding service.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what, bool transient = false)
      : Error(what), transient_(transient) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kBackend; }
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class HttpStatusError : public BackendError {
 public:
  HttpStatusError(int status, const std::string& body)
      : BackendError("HTTP " + std::to_string(status) + ": " + body,
                     status >= 500 || status == 429),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class SchemaError : public BackendError {
 public:
  explicit SchemaError(const std::string& what)
      : BackendError("response schema mismatch: " + what) {}
};

}  // namespace ontoforge

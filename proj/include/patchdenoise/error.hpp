#pragma once

#include <stdexcept>
#include <string>

namespace patchdenoise {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent model / run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Stored bytes do not match what their header promises.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A file is present but not in the expected layout (missing sidecar, bad key...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, written or renamed.
class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace patchdenoise

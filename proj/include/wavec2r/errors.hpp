#pragma once

#include <stdexcept>
#include <string>

namespace wavec2r {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input shape, range or value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent configuration (including missing checkpoints).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Archive access failure; carries the offending event id when known.
class ArchiveError : public IoError {
 public:
  enum class Kind { missing_file, missing_event, missing_modality, corrupt_record };

  ArchiveError(Kind kind, std::string event_id, const std::string& what)
      : IoError(what), kind_(kind), event_id_(std::move(event_id)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& event_id() const noexcept { return event_id_; }

 private:
  Kind kind_;
  std::string event_id_;
};

}  // namespace wavec2r

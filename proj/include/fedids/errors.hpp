#pragma once

#include <stdexcept>
#include <string>

namespace fedids {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix dimensions disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was handed an empty collection it cannot work with.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid configuration (model, strategy, experiment).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data does not follow the expected column schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A split asked for more rows of a class than the dataset holds.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Federation message flow or phase ordering was violated.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// An unlabeled client was asked to take part in a labeled phase.
class ParticipationError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class FilesystemError : public Error {
 public:
  using Error::Error;
};

/// Structured config text could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

void require_shape(bool ok, const std::string& what);

}  // namespace fedids

#pragma once

#include <stdexcept>
#include <string>

namespace dart {

/// Error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kDimension,
  kConfig,
  kRange,
  kInvalidValue,
  kContract,
  kIo,
  kTransport,
  kFixture,
  kLookup,
  kNonFinite,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DART_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(Kind, what) {}      \
  };

DART_DEFINE_ERROR(DimensionError, ErrorKind::kDimension)
DART_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
DART_DEFINE_ERROR(RangeError, ErrorKind::kRange)
DART_DEFINE_ERROR(InvalidValueError, ErrorKind::kInvalidValue)
DART_DEFINE_ERROR(ContractError, ErrorKind::kContract)
DART_DEFINE_ERROR(IoError, ErrorKind::kIo)
DART_DEFINE_ERROR(TransportError, ErrorKind::kTransport)
DART_DEFINE_ERROR(FixtureError, ErrorKind::kFixture)
DART_DEFINE_ERROR(LookupError, ErrorKind::kLookup)
DART_DEFINE_ERROR(NonFiniteError, ErrorKind::kNonFinite)

#undef DART_DEFINE_ERROR

/// Process exit code for an error kind: 1 contract/config, 2 I/O, 3 transport.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
      return 2;
    case ErrorKind::kTransport:
      return 3;
    default:
      return 1;
  }
}

}  // namespace dart

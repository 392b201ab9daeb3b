#pragma once

#include <stdexcept>
#include <string>

namespace taxclass {

enum class ErrorKind {
  MalformedCode,
  MissingColumn,
  DuplicateId,
  EmptyField,
  NotFound,
  AmbiguousTitle,
  InsufficientPool,
  IllegalVariant,
  MissingVariable,
  ProviderUnavailable,
  DimensionMismatch,
  ZeroVector,
  EmptyInference,
  PoolTooSmall,
  Unparseable,
  ConfigMismatch,
  AuthError,
  RateLimited,
  TransportError,
  UnknownModel,
  MissingVerdict,
  InstanceMismatch,
  IoError,
  ConfigError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedCode: return "MalformedCode";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::EmptyField: return "EmptyField";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::AmbiguousTitle: return "AmbiguousTitle";
    case ErrorKind::InsufficientPool: return "InsufficientPool";
    case ErrorKind::IllegalVariant: return "IllegalVariant";
    case ErrorKind::MissingVariable: return "MissingVariable";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyInference: return "EmptyInference";
    case ErrorKind::PoolTooSmall: return "PoolTooSmall";
    case ErrorKind::Unparseable: return "Unparseable";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::AuthError: return "AuthError";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::TransportError: return "TransportError";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::MissingVerdict: return "MissingVerdict";
    case ErrorKind::InstanceMismatch: return "InstanceMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace taxclass

#pragma once

#include <stdexcept>
#include <string>

namespace pwrules {

enum class ErrorKind {
  Syntax,
  Valence,
  HitLimit,
  CombinatorialLimit,
  EmptyLibrary,
  EmptyProbe,
  Shape,
  Value,
  Length,
  Index,
  UnknownProtein,
  EmptyDataset,
  InsufficientEntities,
  Divergence,
  NoPositiveAttribution,
  UnknownFragment,
  IdMismatch,
  NoActives,
  DegenerateTruth,
  Parse,
  EmptySet,
  Config,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Syntax: return "SyntaxError";
    case ErrorKind::Valence: return "ValenceError";
    case ErrorKind::HitLimit: return "HitLimitExceeded";
    case ErrorKind::CombinatorialLimit: return "CombinatorialLimit";
    case ErrorKind::EmptyLibrary: return "EmptyLibrary";
    case ErrorKind::EmptyProbe: return "EmptyProbe";
    case ErrorKind::Shape: return "ShapeError";
    case ErrorKind::Value: return "ValueError";
    case ErrorKind::Length: return "LengthError";
    case ErrorKind::Index: return "IndexError";
    case ErrorKind::UnknownProtein: return "UnknownProtein";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::InsufficientEntities: return "InsufficientEntities";
    case ErrorKind::Divergence: return "DivergenceError";
    case ErrorKind::NoPositiveAttribution: return "NoPositiveAttribution";
    case ErrorKind::UnknownFragment: return "UnknownFragment";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::NoActives: return "NoActives";
    case ErrorKind::DegenerateTruth: return "DegenerateTruth";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

}  // namespace pwrules

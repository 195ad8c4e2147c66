// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace retro {

enum class ErrorKind {
  // smiles
  EmptyInput,
  UnclosedRing,
  UnbalancedParen,
  UnknownSymbol,
  InvalidBond,
  // dataset
  Io,
  Format,
  TooFewSamples,
  Config,
  LeakDetected,
  EmptyDataset,
  // nn / optim
  SequenceTooLong,
  VersionMismatch,
  ChecksumMismatch,
  ShapeMismatch,
  NonFiniteGradient,
  // decode / eval
  BeamTooNarrow,
  DecodeLengthExceeded,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::UnclosedRing: return "UnclosedRing";
    case ErrorKind::UnbalancedParen: return "UnbalancedParen";
    case ErrorKind::UnknownSymbol: return "UnknownSymbol";
    case ErrorKind::InvalidBond: return "InvalidBond";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::LeakDetected: return "LeakDetected";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::BeamTooNarrow: return "BeamTooNarrow";
    case ErrorKind::DecodeLengthExceeded: return "DecodeLengthExceeded";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace retro

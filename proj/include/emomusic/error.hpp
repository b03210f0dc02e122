#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emomusic {

enum class ErrorCode {
  // midi_io
  MalformedHeader,
  TruncatedTrack,
  UnsupportedFormat,
  // metrics
  EmptyPiece,
  EmptyRoll,
  TooShort,
  // pairing
  DegenerateRange,
  OutOfRange,
  EmptyCatalog,
  DuplicateId,
  CountMismatch,
  // nn_core
  ShapeMismatch,
  BatchTooSmall,
  // emomodel
  BadFeatureFile,
  BadImage,
  VocabMismatch,
  PrefixTooLong,
  CheckpointCorrupt,
  WeightsMissing,
  // training
  PredictorMissing,
  CatalogTooSmall,
  MissingArtifacts,
  // plumbing
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for errors caused by bad user input (CLI exit code 1); the rest are
/// runtime failures (exit code 2).
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the error-name prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace emomusic

#include "emomusic/error.hpp"

namespace emomusic {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedTrack: return "TruncatedTrack";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::EmptyPiece: return "EmptyPiece";
    case ErrorCode::EmptyRoll: return "EmptyRoll";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptyCatalog: return "EmptyCatalog";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::BadFeatureFile: return "BadFeatureFile";
    case ErrorCode::BadImage: return "BadImage";
    case ErrorCode::VocabMismatch: return "VocabMismatch";
    case ErrorCode::PrefixTooLong: return "PrefixTooLong";
    case ErrorCode::CheckpointCorrupt: return "CheckpointCorrupt";
    case ErrorCode::WeightsMissing: return "WeightsMissing";
    case ErrorCode::PredictorMissing: return "PredictorMissing";
    case ErrorCode::CatalogTooSmall: return "CatalogTooSmall";
    case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DegenerateRange:
    case ErrorCode::OutOfRange:
    case ErrorCode::EmptyCatalog:
    case ErrorCode::DuplicateId:
    case ErrorCode::CountMismatch:
    case ErrorCode::ConfigError:
    case ErrorCode::CatalogTooSmall:
    case ErrorCode::MalformedHeader:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::BadFeatureFile:
    case ErrorCode::BadImage:
    case ErrorCode::VocabMismatch:
    case ErrorCode::PrefixTooLong:
      return true;
    default:
      return false;
  }
}

}  // namespace emomusic

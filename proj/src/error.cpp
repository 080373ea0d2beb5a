#include "protonet/error.hpp"

namespace protonet {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kEmptyQuerySet: return "EmptyQuerySet";
    case ErrorCode::kInvalidArchitecture: return "InvalidArchitecture";
    case ErrorCode::kInsufficientClasses: return "InsufficientClasses";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kClassIndexOutOfRange: return "ClassIndexOutOfRange";
    case ErrorCode::kMalformedPGM: return "MalformedPGM";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kZeroTargetSize: return "ZeroTargetSize";
    case ErrorCode::kClassTooSmall: return "ClassTooSmall";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyMatrix: return "EmptyMatrix";
    case ErrorCode::kConfigParseError: return "ConfigParseError";
    case ErrorCode::kDatasetError: return "DatasetError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace protonet

#ifndef PROTONET_ERROR_HPP
#define PROTONET_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace protonet {

enum class ErrorCode {
  kEmptyClass,
  kDimensionMismatch,
  kNonFiniteInput,
  kEmptyQuerySet,
  kInvalidArchitecture,
  kInsufficientClasses,
  kInsufficientSamples,
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedFile,
  kClassIndexOutOfRange,
  kMalformedPGM,
  kEmptyDataset,
  kZeroTargetSize,
  kClassTooSmall,
  kShapeMismatch,
  kEmptyMatrix,
  kConfigParseError,
  kDatasetError,
  kIoError,
  kInvalidArgument,
};

std::string_view error_name(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map failures without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace protonet

#endif  // PROTONET_ERROR_HPP

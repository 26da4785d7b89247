#pragma once

#include <stdexcept>
#include <string>

namespace gsdrive {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidCamera,
  kInvalidRotation,
  kInvalidDepth,
  kBehindCamera,
  kShapeMismatch,
  kDimensionMismatch,
  kNonFinite,
  kDivergence,
  kDegenerateSource,
  kDegenerateBounds,
  kDatasetTooSmall,
  kSamplingFailed,
  kEpisodeDone,
  kInvalidRatio,
  kTraceTooShort,
  kUnknownTemplate,
  kConfig,
  kVersionMismatch,
  kIo,
  kFormat,
};

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gsdrive

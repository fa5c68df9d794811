// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adws {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kMalformedImage,
  kUnsupportedFormat,
  kMissingDirectory,
  kEmptyTrainingSet,
  kModelLoadError,
  kShapeMismatch,
  kProbeFailure,
  kInferenceError,
  kImageTooSmall,
  kTooFewDescriptors,
  kDimMismatch,
  kTooFewSamples,
  kNonFiniteInput,
  kSingularCovariance,
  kEmptyTraining,
  kBackboneMismatch,
  kDictionaryFormat,
  kSingleClass,
  kLengthMismatch,
};

/// Coarse grouping used to pick a CLI exit code.
enum class ErrorCategory { kUsage, kData, kModel };

std::string_view to_string(ErrorCode code);
ErrorCategory category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace adws

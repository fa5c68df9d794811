// Copyright 2026 The adws Authors
// SPDX-License-Identifier: Apache-2.0

#include "adws/error.hpp"

namespace adws {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMalformedImage: return "MalformedImage";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kMissingDirectory: return "MissingDirectory";
    case ErrorCode::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::kModelLoadError: return "ModelLoadError";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kProbeFailure: return "ProbeFailure";
    case ErrorCode::kInferenceError: return "InferenceError";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kTooFewDescriptors: return "TooFewDescriptors";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kEmptyTraining: return "EmptyTraining";
    case ErrorCode::kBackboneMismatch: return "BackboneMismatch";
    case ErrorCode::kDictionaryFormat: return "DictionaryFormat";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

ErrorCategory category(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return ErrorCategory::kUsage;
    case ErrorCode::kModelLoadError:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kProbeFailure:
    case ErrorCode::kInferenceError:
    case ErrorCode::kBackboneMismatch:
    case ErrorCode::kSingularCovariance:
      return ErrorCategory::kModel;
    default:
      return ErrorCategory::kData;
  }
}

}  // namespace adws

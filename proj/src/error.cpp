#include "epimatch/error.hpp"

namespace epimatch {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::kEpipoleQuery: return "EpipoleQuery";
    case ErrorCode::kDegenerateLine: return "DegenerateLine";
    case ErrorCode::kPointAtInfinity: return "PointAtInfinity";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kAmbiguousCheirality: return "AmbiguousCheirality";
    case ErrorCode::kNotEnoughMatches: return "NotEnoughMatches";
    case ErrorCode::kNoValidHypothesis: return "NoValidHypothesis";
    case ErrorCode::kEmptySupervision: return "EmptySupervision";
    case ErrorCode::kBadDimensions: return "BadDimensions";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kDegeneratePose: return "DegeneratePose";
    case ErrorCode::kEmptyDatasetAfterFilter: return "EmptyDatasetAfterFilter";
    case ErrorCode::kZeroTranslation: return "ZeroTranslation";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kFormat: return "FormatError";
  }
  return "Unknown";
}

}  // namespace epimatch

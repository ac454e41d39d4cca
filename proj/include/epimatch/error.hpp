#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace epimatch {

enum class ErrorCode {
  kDegenerateBaseline,
  kEpipoleQuery,
  kDegenerateLine,
  kPointAtInfinity,
  kBehindCamera,
  kDegenerateConfiguration,
  kAmbiguousCheirality,
  kNotEnoughMatches,
  kNoValidHypothesis,
  kEmptySupervision,
  kBadDimensions,
  kNonFiniteGradient,
  kNonFiniteLoss,
  kDegeneratePose,
  kEmptyDatasetAfterFilter,
  kZeroTranslation,
  kEmptyInput,
  kInvalidArgument,
  kIo,
  kFormat,
};

std::string_view error_name(ErrorCode code);

// Every failure raised by the library carries a category so callers (and the
// CLI exit path) can tell geometric degeneracies from I/O problems.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define EPIMATCH_REQUIRE(cond, code, msg)       \
  do {                                          \
    if (!(cond)) throw ::epimatch::Error(code, msg); \
  } while (0)

}  // namespace epimatch

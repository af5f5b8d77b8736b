#ifndef AFFORD_ERROR_HPP
#define AFFORD_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace afford {

enum class ErrorCode {
  // arcot
  InvalidK,
  EmptyInstruction,
  LlmUnavailable,
  EmptyObjectSet,
  EmptyPredicateList,
  EmptySubActionSet,
  // grounding
  SegmenterFailure,
  EmptyMask,
  EncoderFailure,
  DimensionMismatch,
  // localization
  BackboneFailure,
  ShapeError,
  UnknownPredicate,
  EmptyActionSet,
  EmptyDataset,
  LabelOutOfRange,
  // metrics
  ZeroMass,
  EmptyFixationSet,
  AllPairsSkipped,
  // dataset
  OutOfBoundsPoint,
  InvalidSigma,
  MissingManifest,
  BrokenRecord,
  UnknownActionLabel,
  MissingSplit,
  // pipeline / io
  NoMatchingPairs,
  InvalidConfig,
  IoError,
  FormatError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto a process exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  /// Re-raises `inner` with the failing pipeline stage prepended.
  Error(std::string_view stage, const Error& inner)
      : std::runtime_error(std::string(stage) + " stage: " + inner.what()), code_(inner.code()), stage_(stage) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorCode code_;
  std::string stage_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace afford

#endif  // AFFORD_ERROR_HPP

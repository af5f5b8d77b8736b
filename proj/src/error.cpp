#include "afford/error.hpp"

namespace afford {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::EmptyInstruction: return "EmptyInstruction";
    case ErrorCode::LlmUnavailable: return "LLMUnavailable";
    case ErrorCode::EmptyObjectSet: return "EmptyObjectSet";
    case ErrorCode::EmptyPredicateList: return "EmptyPredicateList";
    case ErrorCode::EmptySubActionSet: return "EmptySubActionSet";
    case ErrorCode::SegmenterFailure: return "SegmenterFailure";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EncoderFailure: return "EncoderFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BackboneFailure: return "BackboneFailure";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::UnknownPredicate: return "UnknownPredicate";
    case ErrorCode::EmptyActionSet: return "EmptyActionSet";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::EmptyFixationSet: return "EmptyFixationSet";
    case ErrorCode::AllPairsSkipped: return "AllPairsSkipped";
    case ErrorCode::OutOfBoundsPoint: return "OutOfBoundsPoint";
    case ErrorCode::InvalidSigma: return "InvalidSigma";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::BrokenRecord: return "BrokenRecord";
    case ErrorCode::UnknownActionLabel: return "UnknownActionLabel";
    case ErrorCode::MissingSplit: return "MissingSplit";
    case ErrorCode::NoMatchingPairs: return "NoMatchingPairs";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IOError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

}  // namespace afford

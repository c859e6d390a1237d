#include "mocsm/errors.hpp"

namespace mocsm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ChannelOutOfRange: return "ChannelOutOfRange";
    case ErrorKind::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorKind::NonUniformGrid: return "NonUniformGrid";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorKind::AllRestartsFailed: return "AllRestartsFailed";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::NotPositiveDefinite || kind == ErrorKind::NonFiniteEvaluation ||
         kind == ErrorKind::AllRestartsFailed;
}

}  // namespace mocsm

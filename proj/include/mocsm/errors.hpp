#pragma once

#include <stdexcept>
#include <string>

namespace mocsm {

enum class ErrorKind {
  DimensionMismatch,
  ChannelOutOfRange,
  UnsupportedDimension,
  NonUniformGrid,
  TooFewPoints,
  DegenerateInput,
  MalformedRow,
  EmptyFile,
  InvalidArgument,
  NotPositiveDefinite,
  NonFiniteEvaluation,
  AllRestartsFailed,
};

const char* to_string(ErrorKind kind);

// Input errors are caused by bad arguments or files; numerical errors by
// parameters that make the model ill-conditioned or non-finite.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mocsm

#pragma once

#include <stdexcept>
#include <string>

namespace lmslam {

enum class ErrorCode {
  Ok = 0,
  AngleNearPi,
  DegenerateCloud,
  EmptyProjection,
  UnlitPixel,
  TooFewFeatures,
  NoConsensus,
  TrackingLost,
  DegenerateConfiguration,
  RelocalizationFailed,
  FinalizeFailed,
  DuplicateId,
  UnknownId,
  UnknownMatchedId,
  Diverged,
  DisconnectedGraph,
  SingularInformation,
  InsufficientData,
  MalformedFile,
  IoError,
  NoPairs,
  InvalidConfig,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

const char* error_code_name(ErrorCode code);

}  // namespace lmslam

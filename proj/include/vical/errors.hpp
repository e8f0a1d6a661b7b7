#pragma once

#include <stdexcept>
#include <string>

namespace vical {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define VICAL_DEFINE_ERROR(Name)                                               \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string &what) : Error(#Name ": " + what) {}       \
  }

VICAL_DEFINE_ERROR(GimbalLock);
VICAL_DEFINE_ERROR(NoConvergence);
VICAL_DEFINE_ERROR(NotConverged);
VICAL_DEFINE_ERROR(Degenerate);
VICAL_DEFINE_ERROR(DegenerateMotion);
VICAL_DEFINE_ERROR(InsufficientData);
VICAL_DEFINE_ERROR(ZeroTruth);
VICAL_DEFINE_ERROR(EmptyBuffer);
VICAL_DEFINE_ERROR(MissingCheckpoint);
VICAL_DEFINE_ERROR(CheckpointError);
VICAL_DEFINE_ERROR(RecordingError);

#undef VICAL_DEFINE_ERROR

// Configuration parse failure; carries the offending line (0 if unknown) and key.
class ParseError : public Error {
public:
  ParseError(const std::string &what, int line = 0, std::string key = {})
      : Error("ParseError: " + what), line_(line), key_(std::move(key)) {}

  int line() const { return line_; }
  const std::string &key() const { return key_; }

private:
  int line_;
  std::string key_;
};

} // namespace vical

#pragma once

#include <stdexcept>
#include <string>

namespace wmforge {

enum class Errc {
  // lm_backend
  AuthMissing,
  Transport,
  BadResponse,
  Refused,
  EmptyRules,
  CacheMiss,
  // prompting
  UnknownStrategy,
  MalformedTemplate,
  EmptyInstruction,
  // dataset
  EmptyRegistry,
  TooManyFailures,
  TooSmall,
  Io,
  SchemaViolation,
  // detector
  EmptyCorpus,
  SingleClass,
  Diverged,
  Empty,
  VersionMismatch,
  // textmetrics
  LengthMismatch,
  EmptyContext,
  // analysis
  NotMock,
  // attacks
  BackendRequired,
  // cli / config
  Config,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc c, const std::string& msg) { throw Error(c, msg); }

}  // namespace wmforge

#pragma once

#include <stdexcept>
#include <string>

namespace watch {

// Process exit codes double as machine-parsable error categories.
enum class ErrorCode : int {
  kUsage = 2,
  kIo = 3,
  kValidation = 4,
  kFingerprint = 5,
  kNumerical = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kFingerprint: return "fingerprint";
    case ErrorCode::kNumerical: return "numerical";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace watch

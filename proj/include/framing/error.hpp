#pragma once

#include <stdexcept>
#include <string>

namespace framing {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed run configuration, template, or asset.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ProviderErrorKind {
  Retriable,   // transport failure, 429, 5xx; survived every retry
  Permanent,   // context overflow, other 4xx
  Capability,  // provider cannot perform the requested operation at all
};

inline const char* to_string(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::Retriable: return "retriable";
    case ProviderErrorKind::Permanent: return "permanent";
    case ProviderErrorKind::Capability: return "capability";
  }
  return "unknown";
}

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + " provider error: " + what), kind_(kind) {}

  ProviderErrorKind kind() const noexcept { return kind_; }

 private:
  ProviderErrorKind kind_;
};

class CapabilityError : public ProviderError {
 public:
  explicit CapabilityError(const std::string& what)
      : ProviderError(ProviderErrorKind::Capability, what) {}
};

// Model output could not be turned into the requested structure. Carries the
// full prompt/reply transcript of the failed attempts.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, std::string transcript)
      : Error(what), transcript_(std::move(transcript)) {}

  const std::string& transcript() const noexcept { return transcript_; }

 private:
  std::string transcript_;
};

}  // namespace framing

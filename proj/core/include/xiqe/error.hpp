#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xiqe {

enum class Errc {
  // prompts
  MissingCaption,
  UnexpectedCaption,
  UnknownVariant,
  InvalidPromptPack,
  // parser
  UnparseableScore,
  DenominatorMismatch,
  OutOfRange,
  // backend
  BackendUnreachable,
  AuthFailed,
  ImageRejected,
  Timeout,
  BackendError,
  ContextOverflow,
  // stats
  EmptyDenominator,
  ZeroVariance,
  TooFewPairs,
  DegenerateData,
  InsufficientData,
  EmptyInput,
  // report / io
  ParseError,
  DuplicateId,
  MissingImage,
  InvalidDataset,
  InvalidConfig,
  IoError,
};

std::string_view to_string(Errc code) noexcept;

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace xiqe

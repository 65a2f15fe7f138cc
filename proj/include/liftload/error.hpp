#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace liftload {

enum class ErrorCode {
  ParseError,
  ValidationError,
  ScheduleMismatch,
  WindowTooLarge,
  InvalidCutoff,
  InvalidConfig,
  EmptyWindow,
  NonFiniteInput,
  NoConvergence,
  NonFiniteLoss,
  FormatVersionMismatch,
  CorruptFile,
  NonFinitePrediction,
  EmptyInput,
  InvalidBounds,
  DegenerateScale,
  MissingSession,
  LengthMismatch,
  InvalidSpec,
  Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. `line` is set for errors tied to a
// position in an input file (1-based, header is line 1).
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace liftload

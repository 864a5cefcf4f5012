#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace piper {

enum class ErrorCode : std::uint8_t {
  InvalidConfig,
  InvalidByte,
  FieldOverflow,
  ArityError,
  OutOfRange,
  MissingEntry,
  DuplicateWithinPart,
  BadMagic,
  VersionMismatch,
  ShortRead,
  RowCountMismatch,
  Io,
  ProtocolViolation,
  PassMismatch,
  DecodeError,
  Timeout,
  Transport,
};

std::string_view to_string(ErrorCode code) noexcept;

inline constexpr std::uint64_t kNoRow = std::numeric_limits<std::uint64_t>::max();
inline constexpr int kNoColumn = -1;

/// Every failure surfaced by the library. `row`, `column` and `byte` are filled
/// in where the failure has a position in the input; otherwise they hold
/// kNoRow / kNoColumn / -1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::uint64_t row = kNoRow,
        int column = kNoColumn, int byte = -1);

  ErrorCode code() const noexcept { return code_; }
  std::uint64_t row() const noexcept { return row_; }
  int column() const noexcept { return column_; }
  int byte() const noexcept { return byte_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Copy with the row shifted by `offset` (chunk-local to global rows).
  Error with_row_offset(std::uint64_t offset) const {
    return Error(code_, detail_, row_ == kNoRow ? kNoRow : row_ + offset, column_, byte_);
  }

  /// Same classification: code and position, message ignored.
  bool same_as(const Error& other) const noexcept {
    return code_ == other.code_ && row_ == other.row_ && column_ == other.column_ &&
           byte_ == other.byte_;
  }

 private:
  ErrorCode code_;
  std::string detail_;
  std::uint64_t row_;
  int column_;
  int byte_;
};

}  // namespace piper

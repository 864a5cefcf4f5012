#include "piper/error.hpp"

#include <utility>

namespace piper {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidByte: return "InvalidByte";
    case ErrorCode::FieldOverflow: return "FieldOverflow";
    case ErrorCode::ArityError: return "ArityError";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::MissingEntry: return "MissingEntry";
    case ErrorCode::DuplicateWithinPart: return "DuplicateWithinPart";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ShortRead: return "ShortRead";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::PassMismatch: return "PassMismatch";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Transport: return "Transport";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message, std::uint64_t row,
                     int column, int byte) {
  std::string out(to_string(code));
  if (row != kNoRow) out += " row=" + std::to_string(row);
  if (column != kNoColumn) out += " col=" + std::to_string(column);
  if (byte >= 0) out += " byte=" + std::to_string(byte);
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message, std::uint64_t row, int column, int byte)
    : std::runtime_error(decorate(code, message, row, column, byte)),
      code_(code),
      detail_(std::move(message)),
      row_(row),
      column_(column),
      byte_(byte) {}

}  // namespace piper

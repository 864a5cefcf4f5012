#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "piper/error.hpp"
#include "piper/schema.hpp"

namespace piper {

enum class TokenClass : std::uint8_t { Tab, Newline, Minus, Digit, HexLetter, Invalid };

struct ByteToken {
  TokenClass cls = TokenClass::Invalid;
  std::uint8_t nibble = 0;  // meaningful for Digit and HexLetter

  friend bool operator==(const ByteToken&, const ByteToken&) = default;
};

namespace detail {

constexpr ByteToken classify_slow(std::uint8_t b) noexcept {
  if (b == '\t') return {TokenClass::Tab, 0};
  if (b == '\n') return {TokenClass::Newline, 0};
  if (b == '-') return {TokenClass::Minus, 0};
  if (b >= '0' && b <= '9') return {TokenClass::Digit, static_cast<std::uint8_t>(b - '0')};
  if (b >= 'a' && b <= 'f') return {TokenClass::HexLetter, static_cast<std::uint8_t>(b - 'a' + 10)};
  return {TokenClass::Invalid, 0};
}

inline constexpr auto kByteTable = [] {
  std::array<ByteToken, 256> table{};
  for (int b = 0; b < 256; ++b) table[b] = classify_slow(static_cast<std::uint8_t>(b));
  return table;
}();

}  // namespace detail

/// Total mapping over 0..255. Only lowercase hex letters are accepted.
constexpr ByteToken classify_byte(std::uint8_t b) noexcept { return detail::kByteTable[b]; }

namespace detail {

// Per-field decoding state shared by both decoders, so identical inputs fail
// with identical errors regardless of which path consumed the bytes.
class FieldState {
 public:
  std::uint64_t rows() const noexcept { return row_; }

  void step(std::uint8_t byte, std::vector<DecodedRecord>& out);
  void digit(std::uint8_t nibble, std::uint8_t byte);
  void minus(std::uint8_t byte);
  void end_field(bool newline, std::vector<DecodedRecord>& out);
  void finish(std::vector<DecodedRecord>& out);

  // Fast-path extension of the register by `count` nibbles, all valid
  // Digit/HexLetter tokens. Falls back to digit() when a decimal field sees a
  // hex letter so that the error lands on the same byte as the scalar path.
  void extend(const std::uint8_t* bytes, const ByteToken* tokens, int count);
  void open_row() noexcept { row_open_ = true; }

 private:
  [[noreturn]] void fail_invalid(std::uint8_t byte) const;
  [[noreturn]] void fail_overflow() const;

  std::uint64_t row_ = 0;
  std::uint32_t column_ = 0;
  std::uint64_t reg_ = 0;  // 64-bit so 31-bit overflow is detectable after a 4-digit step
  std::uint32_t digits_ = 0;
  bool negative_ = false;
  bool row_open_ = false;
  bool decimal_ = true;  // column_ holds the label or a dense field
  DecodedRecord current_{};
};

}  // namespace detail

/// Incremental UTF-8 (ASCII) TSV decoder. `feed` may be called with arbitrary
/// chunk boundaries; `finish` flushes a final row lacking its '\n'. Once a call
/// throws, the decoder is poisoned and rethrows the same error.
class Decoder {
 public:
  virtual ~Decoder() = default;
  void feed(std::string_view bytes, std::vector<DecodedRecord>& out);
  void finish(std::vector<DecodedRecord>& out);
  std::uint64_t rows() const noexcept { return state_.rows(); }

 protected:
  virtual void consume(std::string_view bytes, std::vector<DecodedRecord>& out) = 0;
  virtual void flush(std::vector<DecodedRecord>& out) = 0;
  detail::FieldState state_;

 private:
  std::optional<Error> failure_;
};

/// Byte-at-a-time reference state machine.
class ScalarDecoder final : public Decoder {
 protected:
  void consume(std::string_view bytes, std::vector<DecodedRecord>& out) override;
  void flush(std::vector<DecodedRecord>& out) override;
};

/// Consumes four bytes per step, dispatching on the delimiter mask of the group
/// (bit 3 = first byte ... bit 0 = fourth byte). Groups containing a minus sign
/// or an invalid byte are replayed byte-wise through the shared field state.
class GroupDecoder final : public Decoder {
 public:
  static constexpr int kWidth = 4;

 protected:
  void consume(std::string_view bytes, std::vector<DecodedRecord>& out) override;
  void flush(std::vector<DecodedRecord>& out) override;

 private:
  void group(const std::uint8_t* g, std::vector<DecodedRecord>& out);

  std::array<std::uint8_t, kWidth> carry_{};
  int carry_len_ = 0;
};

/// Width 1 selects ScalarDecoder, width 4 GroupDecoder.
std::unique_ptr<Decoder> make_decoder(std::uint32_t group_width);

std::vector<DecodedRecord> decode_scalar(std::string_view bytes);
std::vector<DecodedRecord> decode_group(std::string_view bytes);

}  // namespace piper

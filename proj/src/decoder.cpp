#include "piper/decoder.hpp"

#include <cstring>
#include <limits>

namespace piper {
namespace detail {

namespace {

constexpr std::uint64_t kMaxDecimalMagnitude = std::numeric_limits<std::int32_t>::max();
constexpr std::uint32_t kMaxHexDigits = 8;
constexpr std::array<std::uint64_t, 5> kPow10 = {1, 10, 100, 1000, 10000};

static_assert(sizeof(DecodedRecord) == 4 * kNumColumns);

// Per-byte group class: bit 0 delimiter, bit 1 needs the byte-wise path.
constexpr std::uint8_t kDelimiter = 1;
constexpr std::uint8_t kSlowPath = 2;
constexpr auto kGroupClass = [] {
  std::array<std::uint8_t, 256> table{};
  for (int b = 0; b < 256; ++b) {
    switch (classify_slow(static_cast<std::uint8_t>(b)).cls) {
      case TokenClass::Tab:
      case TokenClass::Newline: table[b] = kDelimiter; break;
      case TokenClass::Minus:
      case TokenClass::Invalid: table[b] = kSlowPath; break;
      default: break;
    }
  }
  return table;
}();

}  // namespace

void FieldState::fail_invalid(std::uint8_t byte) const {
  throw Error(ErrorCode::InvalidByte, "unexpected byte", row_, static_cast<int>(column_), byte);
}

void FieldState::fail_overflow() const {
  throw Error(ErrorCode::FieldOverflow,
              is_decimal(column_kind(column_)) ? "decimal exceeds 31-bit magnitude"
                                               : "more than 8 hex digits",
              row_, static_cast<int>(column_));
}

void FieldState::digit(std::uint8_t nibble, std::uint8_t byte) {
  row_open_ = true;
  if (decimal_) {
    if (nibble > 9) fail_invalid(byte);
    reg_ = reg_ * 10 + nibble;
    if (reg_ > kMaxDecimalMagnitude) fail_overflow();
  } else {
    if (digits_ == kMaxHexDigits) fail_overflow();
    reg_ = (reg_ << 4) | nibble;
  }
  ++digits_;
}

void FieldState::minus(std::uint8_t byte) {
  row_open_ = true;
  if (!decimal_ || digits_ != 0 || negative_) fail_invalid(byte);
  negative_ = true;
}

void FieldState::end_field(bool newline, std::vector<DecodedRecord>& out) {
  const bool last = column_ + 1 == kNumColumns;
  if (newline != last) {
    if (last) throw Error(ErrorCode::ArityError, "more than " + std::to_string(kNumColumns) + " fields", row_);
    throw Error(ErrorCode::ArityError,
                "row has " + std::to_string(column_ + 1) + " fields, expected " + std::to_string(kNumColumns),
                row_);
  }
  // Records are 40 consecutive 32-bit words in column order. Negative
  // decimals become the two's complement of their magnitude; hex fields
  // never carry a sign.
  const auto magnitude = static_cast<std::uint32_t>(reg_);
  const std::uint32_t bits = negative_ ? ~magnitude + 1u : magnitude;
  std::memcpy(reinterpret_cast<char*>(&current_) + 4 * column_, &bits, sizeof bits);
  reg_ = 0;
  digits_ = 0;
  negative_ = false;
  if (newline) {
    out.push_back(current_);
    ++row_;
    column_ = 0;
    decimal_ = true;
    row_open_ = false;
  } else {
    ++column_;
    decimal_ = column_ < kFirstSparseColumn;
    row_open_ = true;
  }
}

void FieldState::step(std::uint8_t byte, std::vector<DecodedRecord>& out) {
  const ByteToken t = classify_byte(byte);
  switch (t.cls) {
    case TokenClass::Tab: end_field(false, out); break;
    case TokenClass::Newline: end_field(true, out); break;
    case TokenClass::Minus: minus(byte); break;
    case TokenClass::Digit:
    case TokenClass::HexLetter: digit(t.nibble, byte); break;
    case TokenClass::Invalid: row_open_ = true; fail_invalid(byte);
  }
}

void FieldState::extend(const std::uint8_t* bytes, const ByteToken* tokens, int count) {
  row_open_ = true;
  if (decimal_) {
    std::uint64_t chunk = 0;
    for (int i = 0; i < count; ++i) {
      if (tokens[i].nibble > 9) {
        for (int j = 0; j < count; ++j) digit(tokens[j].nibble, bytes[j]);
        return;
      }
      chunk = chunk * 10 + tokens[i].nibble;
    }
    reg_ = reg_ * kPow10[count] + chunk;
    digits_ += count;
    if (reg_ > kMaxDecimalMagnitude) fail_overflow();
  } else {
    if (digits_ + count > kMaxHexDigits) fail_overflow();
    for (int i = 0; i < count; ++i) reg_ = (reg_ << 4) | tokens[i].nibble;
    digits_ += count;
  }
}

void FieldState::finish(std::vector<DecodedRecord>& out) {
  if (row_open_) end_field(true, out);
}

}  // namespace detail

void Decoder::feed(std::string_view bytes, std::vector<DecodedRecord>& out) {
  if (failure_) throw *failure_;
  try {
    consume(bytes, out);
  } catch (const Error& e) {
    failure_ = e;
    throw;
  }
}

void Decoder::finish(std::vector<DecodedRecord>& out) {
  if (failure_) throw *failure_;
  try {
    flush(out);
    state_.finish(out);
  } catch (const Error& e) {
    failure_ = e;
    throw;
  }
}

void ScalarDecoder::consume(std::string_view bytes, std::vector<DecodedRecord>& out) {
  for (const char c : bytes) state_.step(static_cast<std::uint8_t>(c), out);
}

void ScalarDecoder::flush(std::vector<DecodedRecord>&) {}

void GroupDecoder::group(const std::uint8_t* g, std::vector<DecodedRecord>& out) {
  using detail::kDelimiter;
  using detail::kGroupClass;
  const unsigned c0 = kGroupClass[g[0]], c1 = kGroupClass[g[1]], c2 = kGroupClass[g[2]], c3 = kGroupClass[g[3]];
  if ((c0 | c1 | c2 | c3) & detail::kSlowPath) {
    for (int j = 0; j < kWidth; ++j) state_.step(g[j], out);
    return;
  }
  const unsigned mask = (c0 & kDelimiter) << 3 | (c1 & kDelimiter) << 2 | (c2 & kDelimiter) << 1 | (c3 & kDelimiter);
  const ByteToken t[kWidth] = {classify_byte(g[0]), classify_byte(g[1]), classify_byte(g[2]),
                               classify_byte(g[3])};

  auto& s = state_;
  const auto ext = [&](int first, int count) { s.extend(g + first, t + first, count); };
  const auto close = [&](int i) { s.end_field(t[i].cls == TokenClass::Newline, out); };

  // Each close() emits one field (o0..o3); ext() folds nibbles into the
  // carried register v.
  switch (mask) {
    case 0b1111: close(0); close(1); close(2); close(3); break;

    case 0b1110: close(0); close(1); close(2); ext(3, 1); break;
    case 0b1101: close(0); close(1); ext(2, 1); close(3); break;
    case 0b1011: close(0); ext(1, 1); close(2); close(3); break;
    case 0b0111: ext(0, 1); close(1); close(2); close(3); break;

    case 0b1100: close(0); close(1); ext(2, 2); break;
    case 0b1010: close(0); ext(1, 1); close(2); ext(3, 1); break;
    case 0b1001: close(0); ext(1, 2); close(3); break;
    case 0b0110: ext(0, 1); close(1); close(2); ext(3, 1); break;
    case 0b0101: ext(0, 1); close(1); ext(2, 1); close(3); break;
    case 0b0011: ext(0, 2); close(2); close(3); break;

    case 0b1000: close(0); ext(1, 3); break;
    case 0b0100: ext(0, 1); close(1); ext(2, 2); break;
    case 0b0010: ext(0, 2); close(2); ext(3, 1); break;
    case 0b0001: ext(0, 3); close(3); break;

    case 0b0000: ext(0, 4); break;
  }
}

void GroupDecoder::consume(std::string_view bytes, std::vector<DecodedRecord>& out) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  std::size_t n = bytes.size();
  if (carry_len_ > 0) {
    while (carry_len_ < kWidth && n > 0) {
      carry_[carry_len_++] = *p++;
      --n;
    }
    if (carry_len_ < kWidth) return;
    carry_len_ = 0;
    group(carry_.data(), out);
  }
  while (n >= kWidth) {
    group(p, out);
    p += kWidth;
    n -= kWidth;
  }
  for (; n > 0; --n) carry_[carry_len_++] = *p++;
}

void GroupDecoder::flush(std::vector<DecodedRecord>& out) {
  const int len = carry_len_;
  carry_len_ = 0;
  for (int i = 0; i < len; ++i) state_.step(carry_[i], out);
}

std::unique_ptr<Decoder> make_decoder(std::uint32_t group_width) {
  if (group_width == 1) return std::make_unique<ScalarDecoder>();
  if (group_width == GroupDecoder::kWidth) return std::make_unique<GroupDecoder>();
  throw Error(ErrorCode::InvalidConfig, "unsupported group width " + std::to_string(group_width));
}

std::vector<DecodedRecord> decode_scalar(std::string_view bytes) {
  ScalarDecoder d;
  std::vector<DecodedRecord> out;
  d.feed(bytes, out);
  d.finish(out);
  return out;
}

std::vector<DecodedRecord> decode_group(std::string_view bytes) {
  GroupDecoder d;
  std::vector<DecodedRecord> out;
  d.feed(bytes, out);
  d.finish(out);
  return out;
}

}  // namespace piper

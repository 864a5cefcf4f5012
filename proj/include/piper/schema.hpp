#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace piper {

// Criteo layout: label, 13 dense decimals, 26 sparse hex hashes.
inline constexpr std::size_t kNumDense = 13;
inline constexpr std::size_t kNumSparse = 26;
inline constexpr std::size_t kNumColumns = 1 + kNumDense + kNumSparse;
inline constexpr std::size_t kFirstDenseColumn = 1;
inline constexpr std::size_t kFirstSparseColumn = 1 + kNumDense;

enum class ColumnKind : std::uint8_t { Label, DenseDecimal, SparseHex };

constexpr ColumnKind column_kind(std::size_t column) noexcept {
  if (column == 0) return ColumnKind::Label;
  if (column < kFirstSparseColumn) return ColumnKind::DenseDecimal;
  return ColumnKind::SparseHex;
}

constexpr bool is_decimal(ColumnKind kind) noexcept { return kind != ColumnKind::SparseHex; }

struct DecodedRecord {
  std::int32_t label = 0;
  std::array<std::int32_t, kNumDense> dense{};
  std::array<std::uint32_t, kNumSparse> sparse{};

  friend bool operator==(const DecodedRecord&, const DecodedRecord&) = default;
};

struct TransformedRecord {
  std::int32_t label = 0;
  std::array<float, kNumDense> dense{};
  std::array<std::uint32_t, kNumSparse> sparse{};

  friend bool operator==(const TransformedRecord&, const TransformedRecord&) = default;
};

/// Builds a record from loose field lists; throws ArityError unless the spans
/// hold exactly kNumDense and kNumSparse values.
DecodedRecord make_decoded(std::int32_t label, std::span<const std::int32_t> dense,
                           std::span<const std::uint32_t> sparse);

enum class Encoding : std::uint8_t { Utf8, Binary };
enum class Spill : std::uint8_t { Memory, Disk };

std::string_view to_string(Encoding e) noexcept;
std::string_view to_string(Spill s) noexcept;
Encoding parse_encoding(std::string_view text);
Spill parse_spill(std::string_view text);

inline constexpr std::uint32_t kSmallVocab = 5000;
inline constexpr std::uint32_t kLargeVocab = 1000000;

struct PipelineConfig {
  std::uint32_t modulus = kSmallVocab;
  std::uint32_t decode_group_width = 4;
  std::size_t channel_capacity = 1024;
  std::size_t rowwise_threads = 1;
  Encoding input_encoding = Encoding::Utf8;
  Spill intermediate_spill = Spill::Memory;
  bool apply_log = true;
  std::filesystem::path spill_dir;  // empty: system temp directory

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Returns `cfg` unchanged or throws InvalidConfig naming the first bad field.
PipelineConfig validate_config(const PipelineConfig& cfg);

/// Applies one `key=value` setting. Unknown keys and malformed values throw
/// InvalidConfig. Keys: modulus, decode_group_width, channel_capacity,
/// rowwise_threads, input_encoding, intermediate_spill, apply_log, spill_dir.
void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// Reads a key=value file ('#' comments, blank lines ignored) over `base`.
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});

}  // namespace piper

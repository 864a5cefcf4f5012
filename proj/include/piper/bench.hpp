#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "piper/engine.hpp"
#include "piper/schema.hpp"

namespace piper {

struct GenOptions {
  std::uint64_t rows = 0;
  std::uint64_t seed = 1;
  double missing_prob = 0.0;
};

/// Criteo-shaped TSV: label in {0,1}; dense decimals in [-100, 1e6] with
/// negatives present; sparse hashes as 1-8 lowercase hex digits (uniform
/// 32-bit values). Every non-label field is empty with probability
/// missing_prob. Deterministic per seed.
std::string generate_dataset(const GenOptions& opts);
void generate_dataset_file(const GenOptions& opts, const std::filesystem::path& out);

/// Decoded "PBIN" image of a UTF-8 dataset, held in memory.
std::string to_binary_image(std::string_view utf8, std::uint32_t group_width = 4);

struct VerifyResult {
  bool equal = true;
  std::uint64_t first_difference = 0;      // byte offset, valid when !equal
  std::optional<std::uint64_t> row;        // record index when past the header
  std::uint64_t size_a = 0;
  std::uint64_t size_b = 0;

  std::string describe() const;
};

/// Byte comparison of two dataset files (typically transformed outputs).
VerifyResult verify_files(const std::filesystem::path& a, const std::filesystem::path& b);
VerifyResult verify_bytes(std::string_view a, std::string_view b, std::size_t header_bytes);

enum class EngineKind : std::uint8_t { Columnwise, Rowwise };
std::string_view to_string(EngineKind e) noexcept;
EngineKind parse_engine(std::string_view text);

struct BenchRow {
  EngineKind engine = EngineKind::Columnwise;
  std::size_t threads = 0;
  Encoding encoding = Encoding::Utf8;
  std::uint32_t modulus = 0;
  std::uint64_t rows = 0;
  double pass1_s = 0;
  double pass2_s = 0;
  StageSeconds stages;
  double rows_per_second = 0;
  int reps = 0;
  bool verified = false;
  std::string error;
};

struct BenchOptions {
  std::uint64_t rows = 100000;
  std::uint64_t seed = 1;
  double missing_prob = 0.1;
  std::vector<EngineKind> engines = {EngineKind::Columnwise, EngineKind::Rowwise};
  std::vector<std::size_t> threads = {1, 2, 4, 8, 16};
  std::vector<Encoding> encodings = {Encoding::Utf8, Encoding::Binary};
  std::vector<std::uint32_t> moduli = {kSmallVocab, kLargeVocab};
  int reps = 3;
  PipelineConfig base;
  /// Pre-generated UTF-8 input; generated from rows/seed/missing_prob when empty.
  std::optional<std::filesystem::path> input;
};

/// Sweeps the matrix. Every cell is verified byte-for-byte against the
/// reference oracle before it is timed; failed cells become error rows.
std::vector<BenchRow> run_bench(const BenchOptions& opts);

/// Throws std::logic_error if a row's rate disagrees with its timings.
void check_row(const BenchRow& row);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const BenchRow& row);

}  // namespace piper

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "piper/io_formats.hpp"
#include "piper/ops.hpp"
#include "piper/schema.hpp"

namespace piper {

/// Wall-clock seconds spent in each row-wise stage. Zero for the column-wise
/// engine.
struct StageSeconds {
  double split = 0;
  double gen_vocab = 0;
  double apply_vocab = 0;
  double concatenate = 0;
};

struct RunStats {
  std::uint64_t rows_processed = 0;
  double pass1_seconds = 0;
  double pass2_seconds = 0;
  StageSeconds per_stage;
  double rows_per_second = 0;
  std::array<std::uint32_t, kNumSparse> unique_counts{};
  std::size_t threads_used = 0;
  std::vector<std::string> warnings;

  void finalize_rate() noexcept {
    const double total = pass1_seconds + pass2_seconds;
    rows_per_second = total > 0 ? static_cast<double>(rows_processed) / total : 0.0;
  }
};

// ---------------------------------------------------------------------------
// Column-wise engine: a demultiplexer splits each batch of rows into one
// stream per column, one lane per column transforms its stream, and a
// remultiplexer stitches the lanes back into rows. All hops are bounded
// channels whose capacity, in rows, is cfg.channel_capacity.

class ColumnwiseEngine {
 public:
  explicit ColumnwiseEngine(const PipelineConfig& cfg);

  /// Pass 1: modulus + first-appearance vocabulary per sparse column.
  /// Returns the number of rows seen.
  std::uint64_t build_vocab(RecordStream& stream);

  /// Pass 2: transforms every row and delivers them to `sink` in input order.
  /// Returns the number of rows emitted.
  std::uint64_t apply_vocab(RecordStream& stream, RecordSink& sink);

  const std::vector<VocabTable>& tables() const noexcept { return tables_; }
  std::array<std::uint32_t, kNumSparse> unique_counts() const noexcept;
  const PipelineConfig& config() const noexcept { return cfg_; }

 private:
  PipelineConfig cfg_;
  std::vector<VocabTable> tables_;
};

RunStats run_columnwise(const RecordSource& src, const PipelineConfig& cfg, RecordSink& sink);
/// Same, on a caller-owned engine whose tables stay available afterwards.
RunStats run_columnwise(const RecordSource& src, ColumnwiseEngine& engine, RecordSink& sink);

// ---------------------------------------------------------------------------
// Row-wise baseline: contiguous row chunks per thread, per-thread
// sub-dictionaries merged at a barrier, then a parallel apply and an ordered
// concatenation.

/// Whole raw dataset held in memory, either UTF-8 text or a decoded binary
/// file image (header included).
struct DatasetBytes {
  Encoding encoding = Encoding::Utf8;
  std::shared_ptr<const std::string> bytes;
};

DatasetBytes load_dataset(const std::filesystem::path& path, Encoding encoding);

struct SubVocab {
  struct Entry {
    std::uint32_t value;
    std::uint32_t ordinal;  // local first-appearance rank within the chunk
  };
  std::size_t chunk_index = 0;
  std::vector<Entry> entries;
};

/// Global ID of v = rank of its earliest (chunk_index, ordinal). Throws
/// DuplicateWithinPart when a part lists a value twice.
VocabTable merge_subvocabs(std::span<const SubVocab> parts, std::uint32_t modulus);

RunStats run_rowwise_baseline(const DatasetBytes& input, const PipelineConfig& cfg, RecordSink& sink,
                              std::size_t threads);

// ---------------------------------------------------------------------------
// Ground truth: single-threaded, two scans, insertion-ordered hash map per
// column. Shares no code with the engines beyond the record types.

std::vector<TransformedRecord> reference_oracle(std::span<const DecodedRecord> records,
                                                const PipelineConfig& cfg);

/// Decodes with the scalar decoder first.
std::vector<TransformedRecord> reference_oracle(std::string_view utf8, const PipelineConfig& cfg);

}  // namespace piper

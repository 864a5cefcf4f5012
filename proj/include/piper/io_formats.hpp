#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "piper/schema.hpp"

namespace piper {

inline constexpr std::size_t kRecordBytes = 4 * kNumColumns;  // 160
inline constexpr std::size_t kHeaderBytes = 24;
inline constexpr std::uint16_t kBinaryVersion = 1;

static_assert(sizeof(DecodedRecord) == kRecordBytes);
static_assert(sizeof(TransformedRecord) == kRecordBytes);

enum class DatasetKind : std::uint8_t { Decoded = 1, Transformed = 2 };

// Layout (little-endian):
//   0  magic "PBIN"     4  version u16    6  kind u8    7  reserved (0)
//   8  row_count u64   16  n_dense u8    17  n_sparse u8   18..23 zero
struct BinaryDatasetHeader {
  std::uint16_t version = kBinaryVersion;
  DatasetKind kind = DatasetKind::Decoded;
  std::uint64_t row_count = 0;
  std::uint8_t n_dense = kNumDense;
  std::uint8_t n_sparse = kNumSparse;

  friend bool operator==(const BinaryDatasetHeader&, const BinaryDatasetHeader&) = default;
};

std::array<std::uint8_t, kHeaderBytes> encode_header(const BinaryDatasetHeader& h);

/// Throws BadMagic, VersionMismatch, or InvalidConfig (wrong column counts or
/// an unexpected kind).
BinaryDatasetHeader decode_header(std::span<const std::uint8_t, kHeaderBytes> bytes,
                                  DatasetKind expected);

void pack_decoded(const DecodedRecord& r, std::span<std::uint8_t, kRecordBytes> out) noexcept;
std::array<std::uint8_t, kRecordBytes> pack_decoded(const DecodedRecord& r) noexcept;
/// Throws ShortRead unless `bytes` holds at least one full record.
DecodedRecord unpack_decoded(std::span<const std::uint8_t> bytes);

void pack_transformed(const TransformedRecord& r, std::span<std::uint8_t, kRecordBytes> out) noexcept;
std::array<std::uint8_t, kRecordBytes> pack_transformed(const TransformedRecord& r) noexcept;
TransformedRecord unpack_transformed(std::span<const std::uint8_t> bytes);

/// Appends packed records to `out`.
void append_packed(std::string& out, std::span<const TransformedRecord> records);

// ---------------------------------------------------------------------------
// Record sources. A source is replayable: every open() starts a fresh pass.

class RecordStream {
 public:
  virtual ~RecordStream() = default;
  /// Replaces the contents of `batch` with the next records. Returns false,
  /// with `batch` empty, at end of stream.
  virtual bool next(std::vector<DecodedRecord>& batch) = 0;
};

class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual std::unique_ptr<RecordStream> open() const = 0;
};

inline constexpr std::size_t kReadChunkBytes = 256 * 1024;

class Utf8BytesSource final : public RecordSource {
 public:
  Utf8BytesSource(std::shared_ptr<const std::string> bytes, std::uint32_t group_width = 4);
  std::unique_ptr<RecordStream> open() const override;

 private:
  std::shared_ptr<const std::string> bytes_;
  std::uint32_t width_;
};

/// `bytes` is a whole decoded binary file, header included.
class BinaryBytesSource final : public RecordSource {
 public:
  explicit BinaryBytesSource(std::shared_ptr<const std::string> bytes);
  std::unique_ptr<RecordStream> open() const override;

 private:
  std::shared_ptr<const std::string> bytes_;
};

class Utf8FileSource final : public RecordSource {
 public:
  Utf8FileSource(std::filesystem::path path, std::uint32_t group_width = 4);
  std::unique_ptr<RecordStream> open() const override;

 private:
  std::filesystem::path path_;
  std::uint32_t width_;
};

class BinaryFileSource final : public RecordSource {
 public:
  explicit BinaryFileSource(std::filesystem::path path);
  std::unique_ptr<RecordStream> open() const override;

 private:
  std::filesystem::path path_;
};

class RecordVectorSource final : public RecordSource {
 public:
  explicit RecordVectorSource(std::shared_ptr<const std::vector<DecodedRecord>> records);
  std::unique_ptr<RecordStream> open() const override;

 private:
  std::shared_ptr<const std::vector<DecodedRecord>> records_;
};

/// Supplies successive chunks of a raw dataset; an empty view means end of
/// input. Chunk boundaries are arbitrary.
using ChunkReader = std::function<std::string_view()>;

/// Record stream over raw bytes of either encoding (binary includes the
/// "PBIN" header).
std::unique_ptr<RecordStream> make_chunk_stream(ChunkReader reader, Encoding encoding,
                                                std::uint32_t group_width = 4);

/// File-backed source; each pass re-opens and re-reads the file.
std::unique_ptr<RecordSource> read_source(const std::filesystem::path& path, Encoding encoding,
                                          std::uint32_t group_width = 4);

/// Loads the whole file up front so a pass measures computation only.
std::unique_ptr<RecordSource> load_source(const std::filesystem::path& path, Encoding encoding,
                                          std::uint32_t group_width = 4);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// ---------------------------------------------------------------------------
// Record sinks.

class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void consume(std::span<const TransformedRecord> records) = 0;
  virtual void finish() {}
};

class VectorSink final : public RecordSink {
 public:
  void consume(std::span<const TransformedRecord> records) override {
    records_.insert(records_.end(), records.begin(), records.end());
  }
  std::vector<TransformedRecord>& records() noexcept { return records_; }

 private:
  std::vector<TransformedRecord> records_;
};

/// Packed records without a header, as carried in RESULT frames.
class PackedSink final : public RecordSink {
 public:
  void consume(std::span<const TransformedRecord> records) override { append_packed(bytes_, records); }
  const std::string& bytes() const noexcept { return bytes_; }

 private:
  std::string bytes_;
};

class CountingSink final : public RecordSink {
 public:
  void consume(std::span<const TransformedRecord> records) override { rows_ += records.size(); }
  std::uint64_t rows() const noexcept { return rows_; }

 private:
  std::uint64_t rows_ = 0;
};

/// Writes a transformed dataset file; the header's row_count is patched in
/// finish().
class BinaryFileSink final : public RecordSink {
 public:
  explicit BinaryFileSink(const std::filesystem::path& path);
  void consume(std::span<const TransformedRecord> records) override;
  void finish() override;
  std::uint64_t rows() const noexcept { return rows_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::string buf_;
  std::uint64_t rows_ = 0;
  bool finished_ = false;
};

/// Streams decoded records into a "PBIN" decoded dataset file.
class DecodedFileWriter {
 public:
  explicit DecodedFileWriter(const std::filesystem::path& path);
  void append(std::span<const DecodedRecord> records);
  void finish();
  std::uint64_t rows() const noexcept { return rows_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::string buf_;
  std::uint64_t rows_ = 0;
  bool finished_ = false;
};

/// Decodes a UTF-8 dataset and writes its decoded binary form. Returns rows.
std::uint64_t convert_to_binary(const std::filesystem::path& utf8_in,
                                const std::filesystem::path& binary_out,
                                std::uint32_t group_width = 4);

/// Reads a whole transformed dataset file.
std::vector<TransformedRecord> read_transformed_file(const std::filesystem::path& path);

}  // namespace piper

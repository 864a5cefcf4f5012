#include "piper/io_formats.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <utility>

#include "piper/bytes.hpp"
#include "piper/decoder.hpp"
#include "piper/error.hpp"

namespace piper {

std::array<std::uint8_t, kHeaderBytes> encode_header(const BinaryDatasetHeader& h) {
  std::array<std::uint8_t, kHeaderBytes> out{};
  std::memcpy(out.data(), "PBIN", 4);
  le::store<std::uint16_t>(out.data() + 4, h.version);
  out[6] = static_cast<std::uint8_t>(h.kind);
  le::store<std::uint64_t>(out.data() + 8, h.row_count);
  out[16] = h.n_dense;
  out[17] = h.n_sparse;
  return out;
}

BinaryDatasetHeader decode_header(std::span<const std::uint8_t, kHeaderBytes> bytes,
                                  DatasetKind expected) {
  if (std::memcmp(bytes.data(), "PBIN", 4) != 0) throw Error(ErrorCode::BadMagic, "expected PBIN");
  BinaryDatasetHeader h;
  h.version = le::load<std::uint16_t>(bytes.data() + 4);
  if (h.version != kBinaryVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported version " + std::to_string(h.version));
  }
  h.kind = static_cast<DatasetKind>(bytes[6]);
  if (h.kind != expected) {
    throw Error(ErrorCode::InvalidConfig, "dataset kind " + std::to_string(bytes[6]) +
                                              " where " +
                                              std::to_string(static_cast<int>(expected)) +
                                              " was expected");
  }
  h.row_count = le::load<std::uint64_t>(bytes.data() + 8);
  h.n_dense = bytes[16];
  h.n_sparse = bytes[17];
  if (h.n_dense != kNumDense || h.n_sparse != kNumSparse) {
    throw Error(ErrorCode::InvalidConfig, "schema mismatch: " + std::to_string(h.n_dense) +
                                              " dense / " + std::to_string(h.n_sparse) +
                                              " sparse columns");
  }
  return h;
}

namespace {

template <typename Record>
void pack_record(const Record& r, std::uint8_t* out) noexcept {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, &r, kRecordBytes);
  } else {
    le::store(out, r.label);
    for (std::size_t i = 0; i < kNumDense; ++i) le::store(out + 4 + 4 * i, r.dense[i]);
    for (std::size_t i = 0; i < kNumSparse; ++i) le::store(out + 56 + 4 * i, r.sparse[i]);
  }
}

template <typename Record>
Record unpack_record(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kRecordBytes) {
    throw Error(ErrorCode::ShortRead, "record needs " + std::to_string(kRecordBytes) +
                                          " bytes, got " + std::to_string(bytes.size()));
  }
  Record r;
  const std::uint8_t* in = bytes.data();
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(&r, in, kRecordBytes);
  } else {
    r.label = le::load<std::int32_t>(in);
    for (std::size_t i = 0; i < kNumDense; ++i) {
      r.dense[i] = le::load<typename decltype(r.dense)::value_type>(in + 4 + 4 * i);
    }
    for (std::size_t i = 0; i < kNumSparse; ++i) r.sparse[i] = le::load<std::uint32_t>(in + 56 + 4 * i);
  }
  return r;
}

}  // namespace

void pack_decoded(const DecodedRecord& r, std::span<std::uint8_t, kRecordBytes> out) noexcept {
  pack_record(r, out.data());
}

std::array<std::uint8_t, kRecordBytes> pack_decoded(const DecodedRecord& r) noexcept {
  std::array<std::uint8_t, kRecordBytes> out;
  pack_record(r, out.data());
  return out;
}

DecodedRecord unpack_decoded(std::span<const std::uint8_t> bytes) {
  return unpack_record<DecodedRecord>(bytes);
}

void pack_transformed(const TransformedRecord& r, std::span<std::uint8_t, kRecordBytes> out) noexcept {
  pack_record(r, out.data());
}

std::array<std::uint8_t, kRecordBytes> pack_transformed(const TransformedRecord& r) noexcept {
  std::array<std::uint8_t, kRecordBytes> out;
  pack_record(r, out.data());
  return out;
}

TransformedRecord unpack_transformed(std::span<const std::uint8_t> bytes) {
  return unpack_record<TransformedRecord>(bytes);
}

void append_packed(std::string& out, std::span<const TransformedRecord> records) {
  const std::size_t base = out.size();
  out.resize(base + records.size() * kRecordBytes);
  auto* dst = reinterpret_cast<std::uint8_t*>(out.data() + base);
  for (const auto& r : records) {
    pack_record(r, dst);
    dst += kRecordBytes;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::string out(size, '\0');
  if (size > 0 && !in.read(out.data(), static_cast<std::streamsize>(size))) {
    throw Error(ErrorCode::Io, "failed reading " + path.string());
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

namespace {

// Decodes a UTF-8 byte stream supplied chunk by chunk by `Reader`.
template <typename Reader>
class Utf8Stream final : public RecordStream {
 public:
  Utf8Stream(Reader reader, std::uint32_t width)
      : reader_(std::move(reader)), decoder_(make_decoder(width)) {}

  bool next(std::vector<DecodedRecord>& batch) override {
    batch.clear();
    while (batch.empty() && !done_) {
      const std::string_view chunk = reader_();
      if (chunk.empty()) {
        decoder_->finish(batch);
        done_ = true;
      } else {
        decoder_->feed(chunk, batch);
      }
    }
    return !batch.empty();
  }

 private:
  Reader reader_;
  std::unique_ptr<Decoder> decoder_;
  bool done_ = false;
};

template <typename Reader>
std::unique_ptr<RecordStream> make_utf8_stream(Reader reader, std::uint32_t width) {
  return std::make_unique<Utf8Stream<Reader>>(std::move(reader), width);
}

// Binary stream over a byte supplier; validates framing against the header.
template <typename Reader>
class BinaryStream final : public RecordStream {
 public:
  explicit BinaryStream(Reader reader) : reader_(std::move(reader)) {
    fill(kHeaderBytes);
    if (pending_.size() < kHeaderBytes) throw Error(ErrorCode::ShortRead, "header truncated");
    const auto* p = reinterpret_cast<const std::uint8_t*>(pending_.data());
    header_ = decode_header(std::span<const std::uint8_t, kHeaderBytes>(p, kHeaderBytes),
                            DatasetKind::Decoded);
    pending_.erase(0, kHeaderBytes);
  }

  bool next(std::vector<DecodedRecord>& batch) override {
    batch.clear();
    fill(kBatchRows * kRecordBytes);
    const std::size_t whole = pending_.size() / kRecordBytes;
    if (whole == 0) {
      if (!pending_.empty()) {
        throw Error(ErrorCode::ShortRead, "file ends inside a record", rows_);
      }
      if (rows_ != header_.row_count) {
        throw Error(ErrorCode::RowCountMismatch,
                    "header says " + std::to_string(header_.row_count) + " rows, file has " +
                        std::to_string(rows_),
                    rows_);
      }
      return false;
    }
    if (rows_ + whole > header_.row_count) {
      throw Error(ErrorCode::RowCountMismatch,
                  "more records than the header's " + std::to_string(header_.row_count),
                  header_.row_count);
    }
    batch.resize(whole);
    const auto* p = reinterpret_cast<const std::uint8_t*>(pending_.data());
    for (std::size_t i = 0; i < whole; ++i) {
      batch[i] = unpack_decoded(std::span<const std::uint8_t>(p + i * kRecordBytes, kRecordBytes));
    }
    pending_.erase(0, whole * kRecordBytes);
    rows_ += whole;
    return true;
  }

 private:
  static constexpr std::size_t kBatchRows = 1024;

  void fill(std::size_t want) {
    while (pending_.size() < want && !eof_) {
      const std::string_view chunk = reader_();
      if (chunk.empty()) {
        eof_ = true;
      } else {
        pending_.append(chunk);
      }
    }
  }

  Reader reader_;
  BinaryDatasetHeader header_;
  std::string pending_;
  std::uint64_t rows_ = 0;
  bool eof_ = false;
};

template <typename Reader>
std::unique_ptr<RecordStream> make_binary_stream(Reader reader) {
  return std::make_unique<BinaryStream<Reader>>(std::move(reader));
}

// Hands out successive slices of an in-memory buffer.
struct MemoryReader {
  std::shared_ptr<const std::string> bytes;
  std::size_t offset = 0;

  std::string_view operator()() {
    const std::size_t n = std::min(kReadChunkBytes, bytes->size() - offset);
    std::string_view out(bytes->data() + offset, n);
    offset += n;
    return out;
  }
};

struct FileReader {
  std::shared_ptr<std::ifstream> in;
  std::shared_ptr<std::string> buf;

  explicit FileReader(const std::filesystem::path& path)
      : in(std::make_shared<std::ifstream>(path, std::ios::binary)),
        buf(std::make_shared<std::string>(kReadChunkBytes, '\0')) {
    if (!*in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  }

  std::string_view operator()() {
    in->read(buf->data(), static_cast<std::streamsize>(buf->size()));
    return {buf->data(), static_cast<std::size_t>(in->gcount())};
  }
};

class VectorStream final : public RecordStream {
 public:
  explicit VectorStream(std::shared_ptr<const std::vector<DecodedRecord>> records)
      : records_(std::move(records)) {}

  bool next(std::vector<DecodedRecord>& batch) override {
    const std::size_t n = std::min<std::size_t>(1024, records_->size() - offset_);
    batch.assign(records_->begin() + static_cast<std::ptrdiff_t>(offset_),
                 records_->begin() + static_cast<std::ptrdiff_t>(offset_ + n));
    offset_ += n;
    return n > 0;
  }

 private:
  std::shared_ptr<const std::vector<DecodedRecord>> records_;
  std::size_t offset_ = 0;
};

}  // namespace

Utf8BytesSource::Utf8BytesSource(std::shared_ptr<const std::string> bytes, std::uint32_t group_width)
    : bytes_(std::move(bytes)), width_(group_width) {}

std::unique_ptr<RecordStream> Utf8BytesSource::open() const {
  return make_utf8_stream(MemoryReader{bytes_}, width_);
}

BinaryBytesSource::BinaryBytesSource(std::shared_ptr<const std::string> bytes)
    : bytes_(std::move(bytes)) {}

std::unique_ptr<RecordStream> BinaryBytesSource::open() const {
  return make_binary_stream(MemoryReader{bytes_});
}

Utf8FileSource::Utf8FileSource(std::filesystem::path path, std::uint32_t group_width)
    : path_(std::move(path)), width_(group_width) {}

std::unique_ptr<RecordStream> Utf8FileSource::open() const {
  return make_utf8_stream(FileReader(path_), width_);
}

BinaryFileSource::BinaryFileSource(std::filesystem::path path) : path_(std::move(path)) {}

std::unique_ptr<RecordStream> BinaryFileSource::open() const {
  return make_binary_stream(FileReader(path_));
}

RecordVectorSource::RecordVectorSource(std::shared_ptr<const std::vector<DecodedRecord>> records)
    : records_(std::move(records)) {}

std::unique_ptr<RecordStream> RecordVectorSource::open() const {
  return std::make_unique<VectorStream>(records_);
}

std::unique_ptr<RecordStream> make_chunk_stream(ChunkReader reader, Encoding encoding,
                                                std::uint32_t group_width) {
  if (encoding == Encoding::Utf8) return make_utf8_stream(std::move(reader), group_width);
  return make_binary_stream(std::move(reader));
}

std::unique_ptr<RecordSource> read_source(const std::filesystem::path& path, Encoding encoding,
                                          std::uint32_t group_width) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "no such file " + path.string());
  if (encoding == Encoding::Utf8) return std::make_unique<Utf8FileSource>(path, group_width);
  return std::make_unique<BinaryFileSource>(path);
}

std::unique_ptr<RecordSource> load_source(const std::filesystem::path& path, Encoding encoding,
                                          std::uint32_t group_width) {
  auto bytes = std::make_shared<const std::string>(read_file(path));
  if (encoding == Encoding::Utf8) return std::make_unique<Utf8BytesSource>(std::move(bytes), group_width);
  return std::make_unique<BinaryBytesSource>(std::move(bytes));
}

namespace {

constexpr std::size_t kWriteFlushBytes = 1 << 20;

std::ofstream open_with_header(const std::filesystem::path& path, DatasetKind kind) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const auto header = encode_header({.kind = kind});
  out.write(reinterpret_cast<const char*>(header.data()), kHeaderBytes);
  return out;
}

void patch_row_count(std::ofstream& out, const std::filesystem::path& path, std::uint64_t rows) {
  std::uint8_t count[8];
  le::store<std::uint64_t>(count, rows);
  out.seekp(8);
  out.write(reinterpret_cast<const char*>(count), sizeof count);
  out.close();
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

}  // namespace

BinaryFileSink::BinaryFileSink(const std::filesystem::path& path)
    : path_(path), out_(open_with_header(path, DatasetKind::Transformed)) {}

void BinaryFileSink::consume(std::span<const TransformedRecord> records) {
  append_packed(buf_, records);
  rows_ += records.size();
  if (buf_.size() >= kWriteFlushBytes) {
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    buf_.clear();
  }
}

void BinaryFileSink::finish() {
  if (finished_) return;
  finished_ = true;
  out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  buf_.clear();
  buf_.shrink_to_fit();
  patch_row_count(out_, path_, rows_);
}

DecodedFileWriter::DecodedFileWriter(const std::filesystem::path& path)
    : path_(path), out_(open_with_header(path, DatasetKind::Decoded)) {}

void DecodedFileWriter::append(std::span<const DecodedRecord> records) {
  const std::size_t base = buf_.size();
  buf_.resize(base + records.size() * kRecordBytes);
  auto* dst = reinterpret_cast<std::uint8_t*>(buf_.data() + base);
  for (const auto& r : records) {
    pack_decoded(r, std::span<std::uint8_t, kRecordBytes>(dst, kRecordBytes));
    dst += kRecordBytes;
  }
  rows_ += records.size();
  if (buf_.size() >= kWriteFlushBytes) {
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    buf_.clear();
  }
}

void DecodedFileWriter::finish() {
  if (finished_) return;
  finished_ = true;
  out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  buf_.clear();
  patch_row_count(out_, path_, rows_);
}

std::uint64_t convert_to_binary(const std::filesystem::path& utf8_in,
                                const std::filesystem::path& binary_out,
                                std::uint32_t group_width) {
  Utf8FileSource source(utf8_in, group_width);
  auto stream = source.open();
  DecodedFileWriter writer(binary_out);
  std::vector<DecodedRecord> batch;
  while (stream->next(batch)) writer.append(batch);
  writer.finish();
  return writer.rows();
}

std::vector<TransformedRecord> read_transformed_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderBytes) throw Error(ErrorCode::ShortRead, "header truncated");
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const auto header = decode_header(std::span<const std::uint8_t, kHeaderBytes>(p, kHeaderBytes),
                                    DatasetKind::Transformed);
  const std::size_t body = bytes.size() - kHeaderBytes;
  if (body % kRecordBytes != 0) {
    throw Error(ErrorCode::ShortRead, "file ends inside a record", body / kRecordBytes);
  }
  if (body / kRecordBytes != header.row_count) {
    throw Error(ErrorCode::RowCountMismatch, "header row_count disagrees with file size");
  }
  std::vector<TransformedRecord> out(header.row_count);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = unpack_transformed(
        std::span<const std::uint8_t>(p + kHeaderBytes + i * kRecordBytes, kRecordBytes));
  }
  return out;
}

}  // namespace piper

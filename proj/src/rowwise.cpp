#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <exception>
#include <random>
#include <thread>

#include "piper/decoder.hpp"
#include "piper/engine.hpp"
#include "piper/error.hpp"

namespace piper {

DatasetBytes load_dataset(const std::filesystem::path& path, Encoding encoding) {
  return {encoding, std::make_shared<const std::string>(read_file(path))};
}

VocabTable merge_subvocabs(std::span<const SubVocab> parts, std::uint32_t modulus) {
  std::vector<const SubVocab*> ordered;
  ordered.reserve(parts.size());
  for (const auto& p : parts) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SubVocab* a, const SubVocab* b) { return a->chunk_index < b->chunk_index; });

  VocabTable merged(modulus);
  // stamp[v] == part number + 1 marks v as already listed by the current part.
  std::vector<std::uint32_t> stamp;
  std::vector<SubVocab::Entry> entries;
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    entries = ordered[k]->entries;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.ordinal < b.ordinal; });
    if (stamp.empty() && !entries.empty()) stamp.assign(modulus, 0);
    const auto mark = static_cast<std::uint32_t>(k + 1);
    for (const auto& e : entries) {
      if (e.value >= modulus) {
        throw Error(ErrorCode::OutOfRange, "value " + std::to_string(e.value) + " >= modulus " +
                                               std::to_string(modulus));
      }
      if (stamp[e.value] == mark) {
        throw Error(ErrorCode::DuplicateWithinPart,
                    "value " + std::to_string(e.value) + " repeated in chunk " +
                        std::to_string(ordered[k]->chunk_index));
      }
      stamp[e.value] = mark;
      merged.observe(e.value);
    }
  }
  return merged;
}

namespace {

using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point start) {
  return std::chrono::duration<double>(clock::now() - start).count();
}

// Runs fn(0..n-1) on n threads; rethrows the failure of the lowest index so
// that the reported error is the earliest in row order.
template <typename F>
void fork_join(std::size_t n, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Chunk {
  std::string_view bytes;  // raw input slice (utf8 rows or packed records)
  std::uint64_t first_row = 0;
  std::uint64_t rows = 0;
  std::filesystem::path input_file;    // Disk spill: the split sub-file
  std::filesystem::path decoded_file;  // Disk spill: GV output
  std::filesystem::path output_file;   // Disk spill: AV output
  std::vector<DecodedRecord> decoded;       // Memory spill
  std::vector<TransformedRecord> output;    // Memory spill
};

class SpillDir {
 public:
  explicit SpillDir(const std::filesystem::path& base) {
    const auto root = base.empty() ? std::filesystem::temp_directory_path() : base;
    std::random_device rd;
    for (int attempt = 0; attempt < 16; ++attempt) {
      auto candidate = root / ("piper-spill-" + std::to_string(rd()));
      if (std::filesystem::create_directories(candidate)) {
        path_ = std::move(candidate);
        return;
      }
    }
    throw Error(ErrorCode::Io, "cannot create spill directory under " + root.string());
  }
  SpillDir(const SpillDir&) = delete;
  SpillDir& operator=(const SpillDir&) = delete;
  ~SpillDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

std::uint64_t count_rows_utf8(std::string_view text) {
  auto rows = static_cast<std::uint64_t>(std::count(text.begin(), text.end(), '\n'));
  if (!text.empty() && text.back() != '\n') ++rows;
  return rows;
}

// Partitions the input into `threads` contiguous chunks with equal row counts
// (the first rows % threads chunks take one extra row).
std::vector<Chunk> split_utf8(std::string_view text, std::uint64_t rows, std::size_t threads) {
  std::vector<Chunk> chunks(threads);
  const std::uint64_t base = rows / threads;
  const std::uint64_t extra = rows % threads;
  std::size_t offset = 0;
  std::uint64_t row = 0;
  for (std::size_t k = 0; k < threads; ++k) {
    const std::uint64_t want = base + (k < extra ? 1 : 0);
    std::size_t end = offset;
    for (std::uint64_t r = 0; r < want; ++r) {
      const void* nl = std::memchr(text.data() + end, '\n', text.size() - end);
      end = nl ? static_cast<std::size_t>(static_cast<const char*>(nl) - text.data()) + 1 : text.size();
    }
    chunks[k].bytes = text.substr(offset, end - offset);
    chunks[k].first_row = row;
    chunks[k].rows = want;
    offset = end;
    row += want;
  }
  return chunks;
}

std::vector<Chunk> split_binary(std::string_view image, std::size_t threads) {
  if (image.size() < kHeaderBytes) throw Error(ErrorCode::ShortRead, "header truncated");
  const auto* p = reinterpret_cast<const std::uint8_t*>(image.data());
  const auto header = decode_header(std::span<const std::uint8_t, kHeaderBytes>(p, kHeaderBytes),
                                    DatasetKind::Decoded);
  const std::size_t body = image.size() - kHeaderBytes;
  const std::uint64_t rows = body / kRecordBytes;
  if (rows > header.row_count) {
    throw Error(ErrorCode::RowCountMismatch,
                "more records than the header's " + std::to_string(header.row_count),
                header.row_count);
  }
  if (body % kRecordBytes != 0) throw Error(ErrorCode::ShortRead, "file ends inside a record", rows);
  if (rows != header.row_count) {
    throw Error(ErrorCode::RowCountMismatch,
                "header says " + std::to_string(header.row_count) + " rows, file has " +
                    std::to_string(rows),
                rows);
  }
  std::vector<Chunk> chunks(threads);
  const std::uint64_t base = rows / threads;
  const std::uint64_t extra = rows % threads;
  std::uint64_t row = 0;
  for (std::size_t k = 0; k < threads; ++k) {
    const std::uint64_t want = base + (k < extra ? 1 : 0);
    chunks[k].bytes = image.substr(kHeaderBytes + row * kRecordBytes, want * kRecordBytes);
    chunks[k].first_row = row;
    chunks[k].rows = want;
    row += want;
  }
  return chunks;
}

std::vector<DecodedRecord> decode_chunk(std::string_view bytes, Encoding encoding,
                                        std::uint32_t width, std::uint64_t first_row) {
  std::vector<DecodedRecord> out;
  if (encoding == Encoding::Utf8) {
    auto decoder = make_decoder(width);
    try {
      decoder->feed(bytes, out);
      decoder->finish(out);
    } catch (const Error& e) {
      throw e.with_row_offset(first_row);
    }
  } else {
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
    out.resize(bytes.size() / kRecordBytes);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = unpack_decoded(std::span<const std::uint8_t>(p + i * kRecordBytes, kRecordBytes));
    }
  }
  return out;
}

// First-appearance sub-dictionaries for one chunk, one per sparse column.
void build_subvocabs(std::span<const DecodedRecord> records, std::uint32_t m,
                     std::vector<std::vector<SubVocab>>& subs, std::size_t chunk) {
  const std::size_t words = (static_cast<std::size_t>(m) + 63) / 64;
  std::vector<std::uint64_t> seen(words * kNumSparse, 0);
  for (std::size_t c = 0; c < kNumSparse; ++c) subs[c][chunk].chunk_index = chunk;
  for (const auto& rec : records) {
    for (std::size_t c = 0; c < kNumSparse; ++c) {
      const std::uint32_t v = modulus(rec.sparse[c], m);
      auto& word = seen[c * words + (v >> 6)];
      const std::uint64_t bit = std::uint64_t{1} << (v & 63);
      if (word & bit) continue;
      word |= bit;
      auto& entries = subs[c][chunk].entries;
      entries.push_back({v, static_cast<std::uint32_t>(entries.size())});
    }
  }
}

TransformedRecord apply_row(const DecodedRecord& rec, const std::vector<VocabTable>& tables,
                            const PipelineConfig& cfg, std::uint64_t row) {
  TransformedRecord out;
  out.label = rec.label;
  for (std::size_t d = 0; d < kNumDense; ++d) out.dense[d] = transform_dense(rec.dense[d], cfg.apply_log);
  for (std::size_t c = 0; c < kNumSparse; ++c) {
    const std::uint32_t v = modulus(rec.sparse[c], cfg.modulus);
    const auto id = tables[c].find(v);
    if (!id) {
      throw Error(ErrorCode::MissingEntry, "value " + std::to_string(v) + " not in vocabulary", row,
                  static_cast<int>(kFirstSparseColumn + c));
    }
    out.sparse[c] = *id;
  }
  return out;
}

}  // namespace

RunStats run_rowwise_baseline(const DatasetBytes& input, const PipelineConfig& cfg_in,
                              RecordSink& sink, std::size_t threads) {
  const PipelineConfig cfg = validate_config(cfg_in);
  if (!input.bytes) throw Error(ErrorCode::Io, "no input bytes");
  if (threads == 0) throw Error(ErrorCode::InvalidConfig, "rowwise_threads must be ≥ 1");
  const std::string_view raw(*input.bytes);
  const bool disk = cfg.intermediate_spill == Spill::Disk;

  RunStats stats;
  std::optional<SpillDir> spill;
  if (disk) spill.emplace(cfg.spill_dir);

  // Split Input File.
  auto t = clock::now();
  const std::uint64_t total_rows =
      input.encoding == Encoding::Utf8
          ? count_rows_utf8(raw)
          : (raw.size() >= kHeaderBytes ? (raw.size() - kHeaderBytes) / kRecordBytes : 0);
  std::size_t workers = threads;
  if (total_rows < workers) {
    workers = std::max<std::uint64_t>(total_rows, 1);
    stats.warnings.push_back("clamped " + std::to_string(threads) + " threads to " +
                             std::to_string(workers) + " (only " + std::to_string(total_rows) +
                             " rows)");
  }
  stats.threads_used = workers;
  std::vector<Chunk> chunks =
      input.encoding == Encoding::Utf8 ? split_utf8(raw, total_rows, workers) : split_binary(raw, workers);
  if (disk) {
    fork_join(workers, [&](std::size_t k) {
      chunks[k].input_file = spill->path() / ("chunk-" + std::to_string(k) + ".in");
      write_file(chunks[k].input_file, chunks[k].bytes);
      chunks[k].bytes = {};
    });
  }
  stats.per_stage.split = seconds_since(t);

  // Generate Vocabulary: per-thread sub-dictionaries, then the merge barrier.
  t = clock::now();
  std::vector<std::vector<SubVocab>> subs(kNumSparse, std::vector<SubVocab>(workers));
  fork_join(workers, [&](std::size_t k) {
    auto& chunk = chunks[k];
    std::string spilled;
    std::string_view bytes = chunk.bytes;
    if (disk) {
      spilled = read_file(chunk.input_file);
      bytes = spilled;
    }
    auto records = decode_chunk(bytes, input.encoding, cfg.decode_group_width, chunk.first_row);
    build_subvocabs(records, cfg.modulus, subs, k);
    if (disk) {
      chunk.decoded_file = spill->path() / ("chunk-" + std::to_string(k) + ".dec");
      DecodedFileWriter writer(chunk.decoded_file);
      writer.append(records);
      writer.finish();
    } else {
      chunk.decoded = std::move(records);
    }
  });
  std::vector<VocabTable> tables;
  tables.reserve(kNumSparse);
  for (std::size_t c = 0; c < kNumSparse; ++c) tables.emplace_back(1);
  fork_join(std::min(workers, kNumSparse), [&](std::size_t k) {
    for (std::size_t c = k; c < kNumSparse; c += std::min(workers, kNumSparse)) {
      tables[c] = merge_subvocabs(subs[c], cfg.modulus);
    }
  });
  subs.clear();
  stats.per_stage.gen_vocab = seconds_since(t);

  // Apply Vocabulary.
  t = clock::now();
  fork_join(workers, [&](std::size_t k) {
    auto& chunk = chunks[k];
    if (disk) {
      BinaryFileSource source(chunk.decoded_file);
      auto stream = source.open();
      chunk.output_file = spill->path() / ("chunk-" + std::to_string(k) + ".out");
      BinaryFileSink out(chunk.output_file);
      std::vector<DecodedRecord> batch;
      std::vector<TransformedRecord> mapped;
      std::uint64_t row = chunk.first_row;
      while (stream->next(batch)) {
        mapped.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) mapped[i] = apply_row(batch[i], tables, cfg, row++);
        out.consume(mapped);
      }
      out.finish();
    } else {
      chunk.output.resize(chunk.decoded.size());
      for (std::size_t i = 0; i < chunk.decoded.size(); ++i) {
        chunk.output[i] = apply_row(chunk.decoded[i], tables, cfg, chunk.first_row + i);
      }
      chunk.decoded = {};
    }
  });
  stats.per_stage.apply_vocab = seconds_since(t);

  // Concatenate Final Results, in chunk order.
  t = clock::now();
  for (auto& chunk : chunks) {
    if (disk) {
      const auto out = read_transformed_file(chunk.output_file);
      sink.consume(out);
      stats.rows_processed += out.size();
    } else {
      sink.consume(chunk.output);
      stats.rows_processed += chunk.output.size();
      chunk.output = {};
    }
  }
  sink.finish();
  stats.per_stage.concatenate = seconds_since(t);

  stats.pass1_seconds = stats.per_stage.split + stats.per_stage.gen_vocab;
  stats.pass2_seconds = stats.per_stage.apply_vocab + stats.per_stage.concatenate;
  for (std::size_t c = 0; c < kNumSparse; ++c) stats.unique_counts[c] = tables[c].size();
  stats.finalize_rate();
  return stats;
}

}  // namespace piper

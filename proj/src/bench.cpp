#include "piper/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "piper/decoder.hpp"
#include "piper/error.hpp"
#include "piper/io_formats.hpp"

namespace piper {

namespace {

template <typename T>
void append_number(std::string& out, T value, int base = 10) {
  char buf[24];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, base);
  out.append(buf, ptr);
}

// Row generator shared by the in-memory and file variants so both emit the
// same text for a given seed.
class RowGenerator {
 public:
  explicit RowGenerator(const GenOptions& opts)
      : rng_(opts.seed), missing_(std::clamp(opts.missing_prob, 0.0, 1.0)) {}

  void append(std::string& out, std::uint64_t rows) {
    for (std::uint64_t r = 0; r < rows; ++r) {
      append_number(out, label_(rng_));
      for (std::size_t d = 0; d < kNumDense; ++d) {
        out.push_back('\t');
        if (missing_(rng_)) continue;
        const std::int32_t v =
            negative_(rng_) ? small_negative_(rng_)
                            : static_cast<std::int32_t>(std::floor(std::pow(10.0, magnitude_(rng_)))) - 1;
        append_number(out, v);
      }
      for (std::size_t s = 0; s < kNumSparse; ++s) {
        out.push_back('\t');
        if (missing_(rng_)) continue;
        append_number(out, hash_(rng_), 16);
      }
      out.push_back('\n');
    }
  }

 private:
  std::mt19937_64 rng_;
  std::bernoulli_distribution missing_;
  std::bernoulli_distribution negative_{0.1};
  std::uniform_int_distribution<int> label_{0, 1};
  std::uniform_int_distribution<std::int32_t> small_negative_{-100, -1};
  std::uniform_real_distribution<double> magnitude_{0.0, 6.0};
  std::uniform_int_distribution<std::uint32_t> hash_;
};

}  // namespace

std::string generate_dataset(const GenOptions& opts) {
  std::string out;
  out.reserve(opts.rows * 320);
  RowGenerator(opts).append(out, opts.rows);
  return out;
}

void generate_dataset_file(const GenOptions& opts, const std::filesystem::path& out) {
  // Generated in slices so large files do not need the whole text in memory.
  constexpr std::uint64_t kSliceRows = 100000;
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::Io, "cannot open " + out.string());
  RowGenerator gen(opts);
  std::string text;
  for (std::uint64_t done = 0; done < opts.rows; done += kSliceRows) {
    text.clear();
    gen.append(text, std::min(kSliceRows, opts.rows - done));
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  if (!file) throw Error(ErrorCode::Io, "failed writing " + out.string());
}

std::string to_binary_image(std::string_view utf8, std::uint32_t group_width) {
  auto decoder = make_decoder(group_width);
  std::vector<DecodedRecord> records;
  decoder->feed(utf8, records);
  decoder->finish(records);
  std::string out(kHeaderBytes + records.size() * kRecordBytes, '\0');
  const auto header = encode_header({.kind = DatasetKind::Decoded, .row_count = records.size()});
  std::memcpy(out.data(), header.data(), kHeaderBytes);
  auto* dst = reinterpret_cast<std::uint8_t*>(out.data() + kHeaderBytes);
  for (const auto& r : records) {
    pack_decoded(r, std::span<std::uint8_t, kRecordBytes>(dst, kRecordBytes));
    dst += kRecordBytes;
  }
  return out;
}

std::string VerifyResult::describe() const {
  if (equal) return "equal (" + std::to_string(size_a) + " bytes)";
  std::string out = "differ at byte offset " + std::to_string(first_difference);
  if (row) out += " (row " + std::to_string(*row) + ")";
  else out += " (header)";
  if (size_a != size_b) out += "; sizes " + std::to_string(size_a) + " vs " + std::to_string(size_b);
  return out;
}

VerifyResult verify_bytes(std::string_view a, std::string_view b, std::size_t header_bytes) {
  VerifyResult r;
  r.size_a = a.size();
  r.size_b = b.size();
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  // Coarse pass over large blocks, then pinpoint the byte.
  constexpr std::size_t kBlock = 1 << 16;
  while (i + kBlock <= n && std::memcmp(a.data() + i, b.data() + i, kBlock) == 0) i += kBlock;
  while (i < n && a[i] == b[i]) ++i;
  if (i == n && a.size() == b.size()) return r;
  r.equal = false;
  r.first_difference = i;
  if (i >= header_bytes) r.row = (i - header_bytes) / kRecordBytes;
  return r;
}

VerifyResult verify_files(const std::filesystem::path& a, const std::filesystem::path& b) {
  return verify_bytes(read_file(a), read_file(b), kHeaderBytes);
}

std::string_view to_string(EngineKind e) noexcept {
  return e == EngineKind::Columnwise ? "columnwise" : "rowwise";
}

EngineKind parse_engine(std::string_view text) {
  if (text == "columnwise") return EngineKind::Columnwise;
  if (text == "rowwise") return EngineKind::Rowwise;
  throw Error(ErrorCode::InvalidConfig, "engine must be columnwise or rowwise, got '" + std::string(text) + "'");
}

void check_row(const BenchRow& row) {
  if (!row.error.empty()) return;
  const double total = row.pass1_s + row.pass2_s;
  const double expected = total > 0 ? static_cast<double>(row.rows) / total : 0.0;
  if (std::abs(expected - row.rows_per_second) > 1e-6 * std::max(1.0, expected)) {
    throw std::logic_error("bench row rate disagrees with its timings");
  }
}

void write_csv_header(std::ostream& out) {
  out << "engine,threads,encoding,modulus,rows,pass1_s,pass2_s,split_s,gen_vocab_s,apply_vocab_s,"
         "concat_s,rows_per_second,reps,verified,error\n";
}

void write_csv_row(std::ostream& out, const BenchRow& row) {
  check_row(row);
  std::string error = row.error;
  for (auto& c : error) {
    if (c == ',' || c == '\n' || c == '"') c = ' ';
  }
  out << to_string(row.engine) << ',' << row.threads << ',' << to_string(row.encoding) << ','
      << row.modulus << ',' << row.rows << ',' << row.pass1_s << ',' << row.pass2_s << ','
      << row.stages.split << ',' << row.stages.gen_vocab << ',' << row.stages.apply_vocab << ','
      << row.stages.concatenate << ',' << row.rows_per_second << ',' << row.reps << ','
      << (row.verified ? 1 : 0) << ',' << error << '\n';
}

namespace {

RunStats run_cell(EngineKind engine, const DatasetBytes& data, const PipelineConfig& cfg,
                  std::size_t threads, RecordSink& sink) {
  if (engine == EngineKind::Rowwise) return run_rowwise_baseline(data, cfg, sink, threads);
  if (data.encoding == Encoding::Utf8) {
    return run_columnwise(Utf8BytesSource(data.bytes, cfg.decode_group_width), cfg, sink);
  }
  return run_columnwise(BinaryBytesSource(data.bytes), cfg, sink);
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchOptions& opts) {
  auto utf8 = std::make_shared<const std::string>(
      opts.input ? read_file(*opts.input)
                 : generate_dataset({opts.rows, opts.seed, opts.missing_prob}));
  const auto records = decode_scalar(*utf8);
  auto binary = std::make_shared<const std::string>(to_binary_image(*utf8));

  std::vector<BenchRow> rows;
  for (const std::uint32_t m : opts.moduli) {
    PipelineConfig cfg = opts.base;
    cfg.modulus = m;
    validate_config(cfg);
    std::string expected;
    append_packed(expected, reference_oracle(records, cfg));

    for (const Encoding enc : opts.encodings) {
      const DatasetBytes data{enc, enc == Encoding::Utf8 ? utf8 : binary};
      cfg.input_encoding = enc;
      for (const EngineKind engine : opts.engines) {
        const std::vector<std::size_t> thread_list =
            engine == EngineKind::Columnwise ? std::vector<std::size_t>{kNumColumns} : opts.threads;
        for (const std::size_t threads : thread_list) {
          BenchRow row;
          row.engine = engine;
          row.threads = threads;
          row.encoding = enc;
          row.modulus = m;
          row.rows = records.size();
          try {
            PackedSink gate;
            run_cell(engine, data, cfg, threads, gate);  // also warms caches
            const auto v = verify_bytes(gate.bytes(), expected, 0);
            if (!v.equal) throw std::runtime_error("output mismatch vs oracle: " + v.describe());
            row.verified = true;
            for (int rep = 0; rep < opts.reps; ++rep) {
              CountingSink sink;
              const RunStats s = run_cell(engine, data, cfg, threads, sink);
              row.pass1_s += s.pass1_seconds;
              row.pass2_s += s.pass2_seconds;
              row.stages.split += s.per_stage.split;
              row.stages.gen_vocab += s.per_stage.gen_vocab;
              row.stages.apply_vocab += s.per_stage.apply_vocab;
              row.stages.concatenate += s.per_stage.concatenate;
            }
            row.reps = opts.reps;
            const double n = std::max(1, opts.reps);
            row.pass1_s /= n;
            row.pass2_s /= n;
            row.stages.split /= n;
            row.stages.gen_vocab /= n;
            row.stages.apply_vocab /= n;
            row.stages.concatenate /= n;
            const double total = row.pass1_s + row.pass2_s;
            row.rows_per_second = total > 0 ? static_cast<double>(row.rows) / total : 0.0;
          } catch (const std::exception& e) {
            const std::string what = e.what();
            row = BenchRow{};
            row.engine = engine;
            row.threads = threads;
            row.encoding = enc;
            row.modulus = m;
            row.rows = records.size();
            row.error = what;
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

}  // namespace piper

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <malloc.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <new>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "piper/bench.hpp"
#include "piper/decoder.hpp"
#include "piper/engine.hpp"
#include "piper/io_formats.hpp"
#include "piper/net.hpp"
#include "piper/ops.hpp"
#include "test_support.hpp"

// ---------------------------------------------------------------------------
// Allocation counter: live bytes and their high-water mark.

namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};

void note_alloc(void* p) {
  if (!p) return;
  const auto now = g_live.fetch_add(static_cast<std::int64_t>(malloc_usable_size(p))) +
                   static_cast<std::int64_t>(malloc_usable_size(p));
  auto peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void note_free(void* p) {
  if (p) g_live.fetch_sub(static_cast<std::int64_t>(malloc_usable_size(p)));
}

void* counted_alloc(std::size_t n) {
  void* p = std::malloc(n ? n : 1);
  if (!p) throw std::bad_alloc();
  note_alloc(p);
  return p;
}

void* counted_aligned(std::size_t n, std::align_val_t al) {
  const auto a = static_cast<std::size_t>(al);
  void* p = std::aligned_alloc(a, (n + a - 1) / a * a);
  if (!p) throw std::bad_alloc();
  note_alloc(p);
  return p;
}

void counted_free(void* p) noexcept {
  note_free(p);
  std::free(p);
}

}  // namespace

void* operator new(std::size_t n) { return counted_alloc(n); }
void* operator new[](std::size_t n) { return counted_alloc(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept {
  try {
    return counted_alloc(n);
  } catch (...) {
    return nullptr;
  }
}
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept {
  try {
    return counted_alloc(n);
  } catch (...) {
    return nullptr;
  }
}
void* operator new(std::size_t n, std::align_val_t al) { return counted_aligned(n, al); }
void* operator new[](std::size_t n, std::align_val_t al) { return counted_aligned(n, al); }
void operator delete(void* p) noexcept { counted_free(p); }
void operator delete[](void* p) noexcept { counted_free(p); }
void operator delete(void* p, std::size_t) noexcept { counted_free(p); }
void operator delete[](void* p, std::size_t) noexcept { counted_free(p); }
void operator delete(void* p, std::align_val_t) noexcept { counted_free(p); }
void operator delete[](void* p, std::align_val_t) noexcept { counted_free(p); }
void operator delete(void* p, std::size_t, std::align_val_t) noexcept { counted_free(p); }
void operator delete[](void* p, std::size_t, std::align_val_t) noexcept { counted_free(p); }

// ---------------------------------------------------------------------------

using namespace piper;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

int g_failures = 0;

void report(int criterion, const char* name, const Verdict& v) {
  std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", criterion, name, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++g_failures;
}

template <typename Fn>
void run_criterion(int criterion, const char* name, Fn&& fn) {
  Verdict v;
  try {
    fn(v);
  } catch (const std::exception& e) {
    v.fail(std::string("exception: ") + e.what());
  }
  report(criterion, name, v);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Compares streamed records against expected packed bytes without storing them.
class ExpectSink final : public RecordSink {
 public:
  explicit ExpectSink(const std::string& expected) : expected_(expected) {}

  void consume(std::span<const TransformedRecord> records) override {
    for (const auto& r : records) {
      const auto b = pack_transformed(r);
      if (ok_ && (offset_ + kRecordBytes > expected_.size() ||
                  std::memcmp(expected_.data() + offset_, b.data(), kRecordBytes) != 0)) {
        ok_ = false;
        first_bad_row_ = offset_ / kRecordBytes;
      }
      offset_ += kRecordBytes;
    }
  }

  bool matches() const { return ok_ && offset_ == expected_.size(); }
  std::string describe() const {
    if (!ok_) return "first differing row " + std::to_string(first_bad_row_);
    return "got " + std::to_string(offset_ / kRecordBytes) + " rows, expected " +
           std::to_string(expected_.size() / kRecordBytes);
  }

 private:
  const std::string& expected_;
  std::size_t offset_ = 0;
  bool ok_ = true;
  std::size_t first_bad_row_ = 0;
};

// Per column, IDs must equal first-appearance ranks of v mod M (ordered-map
// oracle) and stay below M.
bool vocabulary_law_holds(std::span<const DecodedRecord> in, std::span<const TransformedRecord> out,
                          std::uint32_t m, std::string& why) {
  if (in.size() != out.size()) {
    why = "row count differs";
    return false;
  }
  for (std::size_t c = 0; c < kNumSparse; ++c) {
    std::map<std::uint32_t, std::uint32_t> ids;
    for (std::size_t r = 0; r < in.size(); ++r) {
      const std::uint32_t v = in[r].sparse[c] % m;
      const auto [it, inserted] = ids.try_emplace(v, static_cast<std::uint32_t>(ids.size()));
      const std::uint32_t got = out[r].sparse[c];
      if (got != it->second || got >= m) {
        why = "column " + std::to_string(c) + " row " + std::to_string(r) + ": id " + std::to_string(got) +
              ", expected " + std::to_string(it->second);
        return false;
      }
    }
  }
  return true;
}

// Vocabulary tables from an engine: ids 0..k-1 each used once, all < M.
bool tables_contiguous(const std::vector<VocabTable>& tables) {
  for (const auto& t : tables) {
    const auto entries = t.entries();
    for (std::uint32_t i = 0; i < entries.size(); ++i) {
      if (entries[i].second != i || entries[i].first >= t.modulus()) return false;
    }
  }
  return true;
}

ChunkReader once(std::string_view data) {
  auto done = std::make_shared<bool>(false);
  return [data, done]() -> std::string_view {
    if (*done) return {};
    *done = true;
    return data;
  };
}

class LocalServer {
 public:
  explicit LocalServer(const PipelineConfig& cfg) : server_("127.0.0.1:0", cfg), thread_([this] { server_.run(); }) {}
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string address() const { return "127.0.0.1:" + std::to_string(server_.port()); }

 private:
  net::Server server_;
  std::thread thread_;
};

// ---------------------------------------------------------------------------

void criterion_1_and_3(Verdict& c1, Verdict& c3) {
  const auto t0 = Clock::now();
  double law_seconds = 0;
  std::size_t runs = 0;
  std::size_t law_checks = 0;
  const std::uint64_t sizes[] = {1000, 100000, 1000000};
  const double missing_probs[] = {0.0, 0.1, 1.0};
  const std::uint32_t moduli[] = {kSmallVocab, kLargeVocab};

  for (const auto rows : sizes) {
    for (const double missing : missing_probs) {
      const auto text = std::make_shared<const std::string>(
          generate_dataset({rows, rows + static_cast<std::uint64_t>(missing * 10), missing}));
      const auto records = decode_scalar(*text);
      for (const std::uint32_t m : moduli) {
        PipelineConfig cfg;
        cfg.modulus = m;
        const std::string cell = "rows=" + std::to_string(rows) + " missing=" + fmt("%.1f", missing) +
                                 " M=" + std::to_string(m);

        std::string expected;
        {
          const auto oracle = reference_oracle(records, cfg);
          std::string why;
          const auto law_t0 = Clock::now();
          if (!vocabulary_law_holds(records, oracle, m, why)) c3.fail(cell + ": " + why);
          law_seconds += seconds_since(law_t0);
          ++law_checks;
          append_packed(expected, oracle);
        }

        {
          Utf8BytesSource src(text);
          ColumnwiseEngine engine(cfg);
          ExpectSink sink(expected);
          run_columnwise(src, engine, sink);
          ++runs;
          if (!sink.matches()) c1.fail(cell + " columnwise: " + sink.describe());
          if (!tables_contiguous(engine.tables())) c3.fail(cell + ": columnwise vocabulary not contiguous");
        }
        for (const std::size_t t : {1u, 2u, 4u, 8u}) {
          ExpectSink sink(expected);
          run_rowwise_baseline({Encoding::Utf8, text}, cfg, sink, t);
          ++runs;
          if (!sink.matches()) c1.fail(cell + " rowwise T=" + std::to_string(t) + ": " + sink.describe());
        }
        {
          LocalServer server(cfg);
          std::size_t offset = 0;
          bool same = true;
          net::run_session([&] { return once(*text); }, server.address(), cfg, [&](std::string_view chunk) {
            if (offset + chunk.size() > expected.size() ||
                std::memcmp(expected.data() + offset, chunk.data(), chunk.size()) != 0) {
              same = false;
            }
            offset += chunk.size();
          });
          ++runs;
          if (!same || offset != expected.size()) c1.fail(cell + " network: output differs");
        }
      }
    }
  }
  // The ordered-map checks belong to criterion 3 and are timed separately.
  const double elapsed = seconds_since(t0) - law_seconds;
  if (elapsed >= 300) c1.fail(fmt("took %.1f s, limit 300 s", elapsed));
  if (c1.pass) c1.detail = std::to_string(runs) + " engine runs byte-identical to the oracle in " + fmt("%.1f s", elapsed);
  if (c3.pass) {
    c3.detail = std::to_string(law_checks) + " datasets, all 26 columns first-appearance contiguous, ids < M" +
                fmt(" (%.1f s)", law_seconds);
  }
}

void criterion_2(Verdict& v) {
  const auto t0 = Clock::now();
  testing::FuzzRows fuzz(2024);
  constexpr std::size_t kRowsTotal = 100000;
  constexpr std::size_t kRowsPerStream = 50;
  std::size_t streams = 0;
  std::size_t with_errors = 0;
  std::size_t rows_decoded = 0;
  for (std::size_t done = 0; done < kRowsTotal; done += kRowsPerStream, ++streams) {
    const std::string bytes = fuzz.rows(kRowsPerStream, 0.01);
    const auto scalar = testing::decode_chunked<ScalarDecoder>(bytes, {});
    rows_decoded += scalar.records.size();
    with_errors += scalar.error.has_value();

    // Feed boundaries every 7 bytes, starting at a stream-dependent residue
    // so all offsets mod 7 are covered.
    std::vector<std::size_t> cuts;
    for (std::size_t at = streams % 7; at < bytes.size(); at += 7) {
      if (at > 0) cuts.push_back(at);
    }
    const auto group_cut = testing::decode_chunked<GroupDecoder>(bytes, cuts);
    const auto group_whole = testing::decode_chunked<GroupDecoder>(bytes, {});
    if (!testing::same_outcome(scalar, group_cut) || !testing::same_outcome(scalar, group_whole)) {
      v.fail("stream " + std::to_string(streams) + " differs between decoders");
    }
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= 60) v.fail(fmt("took %.1f s, limit 60 s", elapsed));
  if (v.pass) {
    v.detail = std::to_string(kRowsTotal) + " fuzzed rows in " + std::to_string(streams) + " streams (" +
               std::to_string(with_errors) + " ending in errors, " + std::to_string(rows_decoded) +
               " rows decoded) identical in " + fmt("%.1f s", elapsed);
  }
}

void criterion_4(Verdict& v) {
  std::size_t datasets = 0;
  for (const double missing : {0.0, 0.1, 1.0}) {
    const auto text = std::make_shared<const std::string>(generate_dataset({100000, 77, missing}));
    const auto image = std::make_shared<const std::string>(to_binary_image(*text));
    if (image->size() != kHeaderBytes + 100000 * kRecordBytes) v.fail("binary image size law violated");
    PipelineConfig cfg;
    PackedSink from_text;
    PackedSink from_binary;
    run_columnwise(Utf8BytesSource(text), cfg, from_text);
    run_columnwise(BinaryBytesSource(image), cfg, from_binary);
    if (from_text.bytes() != from_binary.bytes()) v.fail("columnwise: binary input differs from utf8 input");
    PackedSink rowwise_binary;
    run_rowwise_baseline({Encoding::Binary, image}, cfg, rowwise_binary, 4);
    if (rowwise_binary.bytes() != from_text.bytes()) v.fail("rowwise: binary input differs from utf8 input");
    ++datasets;
  }

  std::mt19937_64 rng(4);
  std::array<std::uint8_t, kRecordBytes> raw{};
  for (int i = 0; i < 100000; ++i) {
    for (auto& b : raw) b = static_cast<std::uint8_t>(rng());
    const auto d = unpack_decoded(raw);
    const auto t = unpack_transformed(raw);
    if (pack_decoded(d) != raw || pack_transformed(t) != raw || unpack_decoded(pack_decoded(d)) != d) {
      v.fail("pack/unpack round trip failed on record " + std::to_string(i));
      break;
    }
  }
  if (v.pass) {
    v.detail = std::to_string(datasets) +
               " datasets of 1e5 rows: binary path identical to utf8; 1e5 random records round-trip";
  }
}

const BenchRow* find_row(const std::vector<BenchRow>& rows, EngineKind e, Encoding enc, std::uint32_t m,
                         std::size_t threads = 0) {
  for (const auto& r : rows) {
    if (r.engine == e && r.encoding == enc && r.modulus == m && (threads == 0 || r.threads == threads)) return &r;
  }
  return nullptr;
}

void write_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  write_csv_header(out);
  for (const auto& r : rows) write_csv_row(out, r);
}

void criteria_5_to_7(const std::filesystem::path& work, Verdict& c5, Verdict& c6, Verdict& c7) {
  const auto input = work / "bench_1e6.tsv";
  generate_dataset_file({1000000, 5, 0.1}, input);

  // Distinct post-modulus values per column at M=1e6.
  std::uint32_t min_distinct = UINT32_MAX;
  {
    const auto records = decode_scalar(read_file(input));
    std::vector<std::uint8_t> seen(kLargeVocab);
    for (std::size_t c = 0; c < kNumSparse; ++c) {
      std::fill(seen.begin(), seen.end(), 0);
      std::uint32_t distinct = 0;
      for (const auto& r : records) {
        auto& s = seen[r.sparse[c] % kLargeVocab];
        distinct += s == 0;
        s = 1;
      }
      min_distinct = std::min(min_distinct, distinct);
    }
  }

  BenchOptions columnwise;
  columnwise.input = input;
  columnwise.engines = {EngineKind::Columnwise};
  columnwise.encodings = {Encoding::Utf8, Encoding::Binary};
  columnwise.moduli = {kSmallVocab, kLargeVocab};
  columnwise.reps = 3;
  const auto cw_rows = run_bench(columnwise);
  write_csv(work / "acceptance_columnwise.csv", cw_rows);
  for (const auto& r : cw_rows) {
    if (!r.error.empty() || !r.verified) {
      c5.fail("bench cell failed: " + r.error);
      c6.fail("bench cell failed: " + r.error);
    }
  }

  const auto* utf8_small = find_row(cw_rows, EngineKind::Columnwise, Encoding::Utf8, kSmallVocab);
  const auto* bin_small = find_row(cw_rows, EngineKind::Columnwise, Encoding::Binary, kSmallVocab);
  const auto* utf8_large = find_row(cw_rows, EngineKind::Columnwise, Encoding::Utf8, kLargeVocab);
  const auto* bin_large = find_row(cw_rows, EngineKind::Columnwise, Encoding::Binary, kLargeVocab);
  if (!utf8_small || !bin_small || !utf8_large || !bin_large) {
    c5.fail("missing bench cells");
    c6.fail("missing bench cells");
  } else {
    const double speedup = bin_small->rows_per_second / utf8_small->rows_per_second;
    if (speedup < 1.5) c5.fail(fmt("binary/utf8 throughput ratio %.2f < 1.5", speedup));
    if (c5.pass) {
      c5.detail = fmt("utf8 %.0f rows/s, ", utf8_small->rows_per_second) +
                  fmt("binary %.0f rows/s, ", bin_small->rows_per_second) + fmt("ratio %.2f (3-run mean)", speedup);
    }

    if (min_distinct < 500000) c6.fail("only " + std::to_string(min_distinct) + " distinct values in some column");
    const double ratio_utf8 = utf8_large->rows_per_second / utf8_small->rows_per_second;
    const double ratio_bin = bin_large->rows_per_second / bin_small->rows_per_second;
    if (ratio_utf8 > 1.0) c6.fail(fmt("utf8: M=1e6 faster than M=5000 (ratio %.3f)", ratio_utf8));
    if (ratio_bin > 1.0) c6.fail(fmt("binary: M=1e6 faster than M=5000 (ratio %.3f)", ratio_bin));
    const std::string ratios = fmt("throughput ratio M=1e6/M=5000: utf8 %.3f, ", ratio_utf8) +
                               fmt("binary %.3f; ", ratio_bin) + "min distinct per column " +
                               std::to_string(min_distinct);
    if (c6.pass) {
      c6.detail = ratios;
    } else {
      c6.detail += " (" + ratios + ")";
    }
  }

  BenchOptions rowwise;
  rowwise.input = input;
  rowwise.engines = {EngineKind::Rowwise};
  rowwise.encodings = {Encoding::Utf8};
  rowwise.moduli = {kLargeVocab};
  rowwise.threads = {1, 2, 4, 8, 16};
  rowwise.reps = 3;
  const auto rw_rows = run_bench(rowwise);
  write_csv(work / "acceptance_rowwise.csv", rw_rows);
  std::string stages;
  for (const auto& r : rw_rows) {
    if (!r.error.empty() || !r.verified) c7.fail("T=" + std::to_string(r.threads) + " failed: " + r.error);
    stages += " T=" + std::to_string(r.threads) + fmt(":%.3fs", r.stages.gen_vocab);
  }
  const auto* t1 = find_row(rw_rows, EngineKind::Rowwise, Encoding::Utf8, kLargeVocab, 1);
  const auto* t16 = find_row(rw_rows, EngineKind::Rowwise, Encoding::Utf8, kLargeVocab, 16);
  if (!t1 || !t16 || rw_rows.size() != 5) {
    c7.fail("missing bench cells");
  } else {
    const double speedup = t1->stages.gen_vocab / t16->stages.gen_vocab;
    if (!(speedup < 16.0)) c7.fail(fmt("gen_vocab speedup at T=16 is %.2f", speedup));
    if (c7.pass) {
      c7.detail = fmt("gen_vocab speedup at T=16: %.2fx; gen_vocab seconds", speedup) + stages +
                  "; outputs verified identical; CSV in " + (work / "acceptance_rowwise.csv").string();
    }
  }
  std::filesystem::remove(input);
}

// Runs the server in a child process so the allocation counter sees only the
// server.
void criterion_8(const std::filesystem::path& work, Verdict& v) {
  const auto t0 = Clock::now();
  constexpr std::size_t kBudget = std::size_t{64} << 20;
  const auto input = work / "stream_input.tsv";
  const auto output = work / "stream_output.pbin";
  generate_dataset_file({1050000, 8, 0.1}, input);
  const auto input_bytes = std::filesystem::file_size(input);
  if (input_bytes < 4 * kBudget) v.fail("input only " + std::to_string(input_bytes) + " bytes");

  PipelineConfig cfg;
  cfg.modulus = kSmallVocab;
  const std::size_t vocab_bytes = kNumSparse * VocabTable(cfg.modulus).memory_bytes();

  int port_pipe[2];
  int done_pipe[2];
  if (::pipe(port_pipe) != 0 || ::pipe(done_pipe) != 0) throw std::runtime_error("pipe failed");
  std::fflush(stdout);
  const pid_t child = ::fork();
  if (child < 0) throw std::runtime_error("fork failed");
  if (child == 0) {
    ::close(port_pipe[0]);
    ::close(done_pipe[1]);
    std::int64_t result[3] = {0, 0, 0};
    try {
      net::ServerOptions opts;
      opts.buffer_budget_bytes = kBudget;
      net::Server server("127.0.0.1:0", cfg, opts);
      const std::uint16_t port = server.port();
      const std::int64_t baseline = g_live.load();
      g_peak.store(baseline);
      std::thread runner([&] { server.run(); });
      if (::write(port_pipe[1], &port, sizeof port) != sizeof port) std::_Exit(3);
      char byte = 0;
      if (::read(done_pipe[0], &byte, 1) != 1) std::_Exit(3);
      server.stop();
      runner.join();
      result[0] = g_peak.load() - baseline;
      result[1] = static_cast<std::int64_t>(server.sessions_completed());
      result[2] = static_cast<std::int64_t>(net::estimate_session_buffers(cfg, net::kMaxFrameBytes));
    } catch (...) {
      std::_Exit(4);
    }
    if (::write(port_pipe[1], result, sizeof result) != sizeof result) std::_Exit(3);
    std::_Exit(0);
  }
  ::close(port_pipe[1]);
  ::close(done_pipe[0]);
  std::uint16_t port = 0;
  if (::read(port_pipe[0], &port, sizeof port) != sizeof port) throw std::runtime_error("server did not start");

  std::uint64_t rows = 0;
  std::string client_error;
  try {
    const auto stats = net::client_send(input, "127.0.0.1:" + std::to_string(port), cfg, output);
    rows = stats.run.rows_processed;
  } catch (const std::exception& e) {
    client_error = e.what();
  }
  const char byte = 1;
  if (::write(done_pipe[1], &byte, 1) != 1) throw std::runtime_error("pipe write failed");
  std::int64_t result[3] = {0, 0, 0};
  const bool got = ::read(port_pipe[0], result, sizeof result) == sizeof result;
  int status = 0;
  ::waitpid(child, &status, 0);
  ::close(port_pipe[0]);
  ::close(done_pipe[1]);

  if (!client_error.empty()) v.fail("client: " + client_error);
  if (!got || !WIFEXITED(status) || WEXITSTATUS(status) != 0) v.fail("server process failed");
  if (result[1] != 1) v.fail("server completed " + std::to_string(result[1]) + " sessions");
  if (rows != 1050000 || std::filesystem::file_size(output) != kHeaderBytes + rows * kRecordBytes) {
    v.fail("output has " + std::to_string(rows) + " rows");
  }
  const auto peak = static_cast<std::size_t>(std::max<std::int64_t>(result[0], 0));
  const std::size_t bound = kBudget + vocab_bytes;
  if (peak > bound) v.fail("server peak " + std::to_string(peak) + " bytes exceeds bound " + std::to_string(bound));
  const double elapsed = seconds_since(t0);
  if (elapsed >= 120) v.fail(fmt("took %.1f s, limit 120 s", elapsed));
  const std::string numbers = fmt("input %.1f MiB, ", static_cast<double>(input_bytes) / (1 << 20)) +
                              fmt("server peak %.2f MiB ", static_cast<double>(peak) / (1 << 20)) +
                              fmt("<= budget 64 MiB + vocab %.2f MiB; ", static_cast<double>(vocab_bytes) / (1 << 20)) +
                              fmt("%.1f s", elapsed);
  if (v.pass) {
    v.detail = numbers;
  } else {
    v.detail += " (" + numbers + ")";
  }
  std::filesystem::remove(input);
  std::filesystem::remove(output);
}

}  // namespace

int main(int argc, char** argv) {
  std::filesystem::path work = std::filesystem::temp_directory_path() / "piper_acceptance";
  if (argc > 1) work = argv[1];
  std::filesystem::create_directories(work);

  Verdict c1;
  Verdict c3;
  try {
    criterion_1_and_3(c1, c3);
  } catch (const std::exception& e) {
    c1.fail(std::string("exception: ") + e.what());
    c3.fail(std::string("exception: ") + e.what());
  }
  report(1, "oracle equivalence", c1);
  run_criterion(2, "decoder equivalence", criterion_2);
  report(3, "vocabulary law", c3);
  run_criterion(4, "binary round trip", criterion_4);

  Verdict c5;
  Verdict c6;
  Verdict c7;
  try {
    criteria_5_to_7(work, c5, c6, c7);
  } catch (const std::exception& e) {
    for (auto* v : {&c5, &c6, &c7}) v->fail(std::string("exception: ") + e.what());
  }
  report(5, "binary vs utf8 throughput", c5);
  report(6, "vocabulary size sensitivity", c6);
  report(7, "rowwise synchronization overhead", c7);

  run_criterion(8, "streaming memory bound", [&](Verdict& v) { criterion_8(work, v); });

  std::printf("%d of 8 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}

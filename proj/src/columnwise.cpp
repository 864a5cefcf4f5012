#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "piper/channel.hpp"
#include "piper/engine.hpp"
#include "piper/error.hpp"

namespace piper {
namespace {

constexpr std::size_t kMaxBlockRows = 2048;

// One column's slice of consecutive rows. Values travel as raw 32-bit words:
// label and dense as int32 bits on the way in, float bits on the way out.
struct ColumnBlock {
  std::uint64_t seq = 0;
  std::uint64_t first_row = 0;
  std::vector<std::uint32_t> words;
};

using BlockChannel = BoundedChannel<ColumnBlock>;
using ChannelSet = std::vector<std::unique_ptr<BlockChannel>>;

struct Geometry {
  std::size_t block_rows;
  std::size_t slots;
};

// Blocks never exceed the configured capacity, so a channel holds at most
// cfg.channel_capacity rows.
Geometry geometry_for(std::size_t capacity) {
  const std::size_t block_rows = std::min(kMaxBlockRows, capacity);
  return {block_rows, std::max<std::size_t>(1, capacity / block_rows)};
}

ChannelSet make_channels(std::size_t n, std::size_t slots) {
  ChannelSet set;
  set.reserve(n);
  for (std::size_t i = 0; i < n; ++i) set.push_back(std::make_unique<BlockChannel>(slots));
  return set;
}

void cancel_all(const ChannelSet& set) {
  for (const auto& ch : set) ch->cancel();
}

// Collects failures from every stage. Positioned errors are ranked by
// (row, column) so that the reported error does not depend on scheduling;
// anything else is fatal and wins outright.
class FailureState {
 public:
  void report(const Error& e) {
    std::lock_guard lock(mu_);
    if (!best_ || std::pair(e.row(), e.column()) < std::pair(best_->row(), best_->column())) {
      best_ = e;
      min_row_.store(e.row(), std::memory_order_relaxed);
    }
  }

  void report_fatal(std::exception_ptr p) {
    std::lock_guard lock(mu_);
    if (!fatal_) fatal_ = std::move(p);
    fatal_flag_.store(true, std::memory_order_relaxed);
  }

  std::uint64_t min_row() const noexcept { return min_row_.load(std::memory_order_relaxed); }
  bool fatal() const noexcept { return fatal_flag_.load(std::memory_order_relaxed); }
  bool any() const noexcept { return fatal() || min_row() != kNoRow; }

  void rethrow_if_any() {
    std::lock_guard lock(mu_);
    if (fatal_) std::rethrow_exception(fatal_);
    if (best_) throw *best_;
  }

 private:
  std::mutex mu_;
  std::optional<Error> best_;
  std::exception_ptr fatal_;
  std::atomic<std::uint64_t> min_row_{kNoRow};
  std::atomic<bool> fatal_flag_{false};
};

class ThreadGroup {
 public:
  ThreadGroup() = default;
  ThreadGroup(const ThreadGroup&) = delete;
  ThreadGroup& operator=(const ThreadGroup&) = delete;
  ~ThreadGroup() { join(); }

  template <typename F>
  void spawn(F&& f) {
    threads_.emplace_back(std::forward<F>(f));
  }

  void join() {
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
    threads_.clear();
  }

 private:
  std::vector<std::thread> threads_;
};

std::uint32_t field_word(const DecodedRecord& r, std::size_t column) noexcept {
  switch (column_kind(column)) {
    case ColumnKind::Label: return std::bit_cast<std::uint32_t>(r.label);
    case ColumnKind::DenseDecimal: return std::bit_cast<std::uint32_t>(r.dense[column - kFirstDenseColumn]);
    case ColumnKind::SparseHex: return r.sparse[column - kFirstSparseColumn];
  }
  return 0;
}

// Splits the record stream into per-column blocks, one channel per entry of
// `columns`. Stops early once an error at an earlier row is known, since no
// later row can change which error is reported.
std::uint64_t demultiplex(RecordStream& stream, std::span<const std::size_t> columns,
                          const ChannelSet& lanes, Geometry geo, FailureState& failure) {
  const std::size_t n = columns.size();
  std::vector<std::vector<std::uint32_t>> pending(n);
  for (auto& p : pending) p.reserve(geo.block_rows);
  std::size_t fill = 0;
  std::uint64_t seq = 0;
  std::uint64_t rows = 0;
  bool stopped = false;

  const auto flush = [&] {
    if (fill == 0) return;
    for (std::size_t l = 0; l < n; ++l) {
      if (!lanes[l]->push(ColumnBlock{seq, rows - fill, std::move(pending[l])})) stopped = true;
      pending[l] = {};
      pending[l].reserve(geo.block_rows);
    }
    ++seq;
    fill = 0;
    if (failure.fatal() || failure.min_row() < rows) stopped = true;
  };

  const auto take = [&](std::span<const DecodedRecord> batch) {
    for (const auto& rec : batch) {
      for (std::size_t l = 0; l < n; ++l) pending[l].push_back(field_word(rec, columns[l]));
      ++fill;
      ++rows;
      if (fill == geo.block_rows) {
        flush();
        if (stopped) return;
      }
    }
  };

  std::vector<DecodedRecord> batch;
  try {
    while (!stopped && stream.next(batch)) take(batch);
    if (!stopped) flush();
  } catch (const Error& e) {
    // Rows decoded before the failure are still valid and still processed.
    if (!stopped) take(batch);
    if (!stopped) flush();
    failure.report(e);
  } catch (...) {
    failure.report_fatal(std::current_exception());
    cancel_all(lanes);
  }
  for (const auto& ch : lanes) ch->close();
  return rows;
}

}  // namespace

ColumnwiseEngine::ColumnwiseEngine(const PipelineConfig& cfg) : cfg_(validate_config(cfg)) {
  tables_.reserve(kNumSparse);
  for (std::size_t c = 0; c < kNumSparse; ++c) tables_.emplace_back(cfg_.modulus);
}

std::array<std::uint32_t, kNumSparse> ColumnwiseEngine::unique_counts() const noexcept {
  std::array<std::uint32_t, kNumSparse> out{};
  for (std::size_t c = 0; c < kNumSparse; ++c) out[c] = tables_[c].size();
  return out;
}

std::uint64_t ColumnwiseEngine::build_vocab(RecordStream& stream) {
  const Geometry geo = geometry_for(cfg_.channel_capacity);
  std::array<std::size_t, kNumSparse> columns;
  for (std::size_t c = 0; c < kNumSparse; ++c) columns[c] = kFirstSparseColumn + c;

  ChannelSet lanes = make_channels(kNumSparse, geo.slots);
  FailureState failure;
  const std::uint32_t m = cfg_.modulus;
  std::uint64_t rows = 0;
  {
    ThreadGroup group;
    for (std::size_t c = 0; c < kNumSparse; ++c) {
      group.spawn([&, c] {
        auto& table = tables_[c];
        auto& in = *lanes[c];
        try {
          while (auto block = in.pop()) {
            for (const std::uint32_t v : block->words) table.observe(modulus(v, m));
          }
        } catch (...) {
          failure.report_fatal(std::current_exception());
          cancel_all(lanes);
        }
      });
    }
    rows = demultiplex(stream, columns, lanes, geo, failure);
    group.join();
  }
  failure.rethrow_if_any();
  return rows;
}

std::uint64_t ColumnwiseEngine::apply_vocab(RecordStream& stream, RecordSink& sink) {
  const Geometry geo = geometry_for(cfg_.channel_capacity);
  std::array<std::size_t, kNumColumns> columns;
  for (std::size_t c = 0; c < kNumColumns; ++c) columns[c] = c;

  ChannelSet inputs = make_channels(kNumColumns, geo.slots);
  ChannelSet outputs = make_channels(kNumColumns, geo.slots);
  FailureState failure;
  const std::uint32_t m = cfg_.modulus;
  const bool apply_log = cfg_.apply_log;
  std::uint64_t emitted = 0;

  const auto lane = [&](std::size_t column) {
    auto& in = *inputs[column];
    auto& out = *outputs[column];
    const ColumnKind kind = column_kind(column);
    bool failed = false;
    try {
      while (auto block = in.pop()) {
        if (failed) continue;  // drain so the demultiplexer never stalls
        auto& words = block->words;
        if (kind == ColumnKind::DenseDecimal) {
          for (auto& w : words) {
            w = std::bit_cast<std::uint32_t>(transform_dense(std::bit_cast<std::int32_t>(w), apply_log));
          }
        } else if (kind == ColumnKind::SparseHex) {
          const auto& table = tables_[column - kFirstSparseColumn];
          for (std::size_t i = 0; i < words.size(); ++i) {
            const std::uint32_t v = modulus(words[i], m);
            if (const auto id = table.find(v)) {
              words[i] = *id;
            } else {
              failure.report(Error(ErrorCode::MissingEntry,
                                   "value " + std::to_string(v) + " not in vocabulary",
                                   block->first_row + i, static_cast<int>(column)));
              failed = true;
              break;
            }
          }
          if (failed) {
            out.close();
            continue;
          }
        }
        out.push(std::move(*block));  // false only after the remultiplexer gave up
      }
    } catch (...) {
      failure.report_fatal(std::current_exception());
      cancel_all(inputs);
      cancel_all(outputs);
    }
    out.close();
  };

  {
    ThreadGroup group;
    for (std::size_t c = 0; c < kNumColumns; ++c) group.spawn([&, c] { lane(c); });
    group.spawn([&] { demultiplex(stream, columns, inputs, geo, failure); });

    // Remultiplexer: one block from every lane per step, sequence-checked.
    std::vector<ColumnBlock> blocks(kNumColumns);
    std::vector<TransformedRecord> rows;
    for (std::uint64_t seq = 0;; ++seq) {
      bool complete = true;
      for (std::size_t c = 0; c < kNumColumns && complete; ++c) {
        auto block = outputs[c]->pop();
        if (!block) {
          complete = false;
        } else {
          blocks[c] = std::move(*block);
        }
      }
      if (!complete) break;
      const std::size_t n = blocks[0].words.size();
      for (const auto& b : blocks) {
        if (b.seq != seq || b.words.size() != n) {
          failure.report_fatal(std::make_exception_ptr(
              std::logic_error("column lanes out of step at block " + std::to_string(seq))));
          break;
        }
      }
      if (failure.fatal()) break;
      rows.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto& r = rows[i];
        r.label = std::bit_cast<std::int32_t>(blocks[0].words[i]);
        for (std::size_t d = 0; d < kNumDense; ++d) {
          r.dense[d] = std::bit_cast<float>(blocks[kFirstDenseColumn + d].words[i]);
        }
        for (std::size_t s = 0; s < kNumSparse; ++s) r.sparse[s] = blocks[kFirstSparseColumn + s].words[i];
      }
      try {
        sink.consume(rows);
      } catch (...) {
        failure.report_fatal(std::current_exception());
        break;
      }
      emitted += n;
    }
    // Unblock lanes still pushing after an early stop; no-op on a clean finish.
    cancel_all(outputs);
    if (failure.fatal()) cancel_all(inputs);
    group.join();
  }
  failure.rethrow_if_any();
  return emitted;
}

RunStats run_columnwise(const RecordSource& src, const PipelineConfig& cfg, RecordSink& sink) {
  ColumnwiseEngine engine(cfg);
  return run_columnwise(src, engine, sink);
}

RunStats run_columnwise(const RecordSource& src, ColumnwiseEngine& engine, RecordSink& sink) {
  using clock = std::chrono::steady_clock;
  RunStats stats;
  stats.threads_used = kNumColumns;

  auto t0 = clock::now();
  {
    auto pass1 = src.open();
    engine.build_vocab(*pass1);
  }
  auto t1 = clock::now();
  {
    auto pass2 = src.open();
    stats.rows_processed = engine.apply_vocab(*pass2, sink);
  }
  sink.finish();
  auto t2 = clock::now();

  stats.pass1_seconds = std::chrono::duration<double>(t1 - t0).count();
  stats.pass2_seconds = std::chrono::duration<double>(t2 - t1).count();
  stats.unique_counts = engine.unique_counts();
  stats.finalize_rate();
  return stats;
}

}  // namespace piper

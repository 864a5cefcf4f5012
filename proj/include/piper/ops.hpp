#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "piper/schema.hpp"

namespace piper {

constexpr std::int32_t neg2zero(std::int32_t x) noexcept { return x < 0 ? 0 : x; }

/// ln(x + 1) rounded to float. Requires x >= 0.
float logarithm(std::int32_t x) noexcept;

constexpr std::uint32_t modulus(std::uint32_t v, std::uint32_t m) noexcept { return v % m; }

/// neg2zero, then logarithm when `apply_log` is set.
float transform_dense(std::int32_t x, bool apply_log) noexcept;

/// Vocabulary for one sparse column: maps post-modulus values to IDs in order
/// of first appearance. Single writer while building, read-only afterwards.
class VocabTable {
 public:
  enum class Observe : std::uint8_t { Inserted, Seen };

  explicit VocabTable(std::uint32_t modulus);

  /// Assigns the next ID on first sight. Throws OutOfRange if v >= modulus.
  Observe observe(std::uint32_t v);

  std::optional<std::uint32_t> find(std::uint32_t v) const noexcept {
    if (v >= modulus_ || !present(v)) return std::nullopt;
    return id_of_[v];
  }

  /// Throws MissingEntry when v was never observed.
  std::uint32_t lookup(std::uint32_t v) const;

  bool present(std::uint32_t v) const noexcept {
    return (present_[v >> 6] >> (v & 63)) & 1u;
  }

  std::uint32_t modulus() const noexcept { return modulus_; }
  std::uint32_t size() const noexcept { return next_id_; }

  /// (value, id) pairs in ID order.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries() const;

  /// Rebuilds a table from values listed in ID order. Throws
  /// DuplicateWithinPart on repeats and OutOfRange on values >= modulus.
  static VocabTable from_ordered_values(std::uint32_t modulus, std::span<const std::uint32_t> values);

  /// Bytes held by the bitmap and ID array.
  std::size_t memory_bytes() const noexcept {
    return present_.size() * sizeof(std::uint64_t) + id_of_.size() * sizeof(std::uint32_t);
  }

  friend bool operator==(const VocabTable&, const VocabTable&) = default;

 private:
  std::uint32_t modulus_;
  std::uint32_t next_id_ = 0;
  std::vector<std::uint64_t> present_;
  std::vector<std::uint32_t> id_of_;
};

// Sidecar format, all fields little-endian u32:
//   "PVOC" | version | modulus | next_id | next_id x (value, id) in id order
inline constexpr std::uint32_t kVocabVersion = 1;

void write_vocab(std::ostream& out, const VocabTable& table);
VocabTable read_vocab(std::istream& in);

/// One sidecar per run: kNumSparse tables back to back.
void save_vocab_set(const std::filesystem::path& path, std::span<const VocabTable> tables);
std::vector<VocabTable> load_vocab_set(const std::filesystem::path& path);

}  // namespace piper

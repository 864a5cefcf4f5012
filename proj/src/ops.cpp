#include "piper/ops.hpp"

#include <cassert>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "piper/bytes.hpp"
#include "piper/error.hpp"

namespace piper {

float logarithm(std::int32_t x) noexcept {
  assert(x >= 0);
  return static_cast<float>(std::log(static_cast<double>(x) + 1.0));
}

float transform_dense(std::int32_t x, bool apply_log) noexcept {
  const std::int32_t clamped = neg2zero(x);
  return apply_log ? logarithm(clamped) : static_cast<float>(clamped);
}

VocabTable::VocabTable(std::uint32_t modulus)
    : modulus_(modulus), present_((static_cast<std::size_t>(modulus) + 63) / 64, 0), id_of_(modulus, 0) {
  if (modulus == 0) throw Error(ErrorCode::InvalidConfig, "modulus must be ≥ 1");
}

VocabTable::Observe VocabTable::observe(std::uint32_t v) {
  if (v >= modulus_) {
    throw Error(ErrorCode::OutOfRange,
                "value " + std::to_string(v) + " >= modulus " + std::to_string(modulus_));
  }
  auto& word = present_[v >> 6];
  const std::uint64_t bit = std::uint64_t{1} << (v & 63);
  if (word & bit) return Observe::Seen;
  word |= bit;
  id_of_[v] = next_id_++;
  return Observe::Inserted;
}

std::uint32_t VocabTable::lookup(std::uint32_t v) const {
  if (auto id = find(v)) return *id;
  throw Error(ErrorCode::MissingEntry, "value " + std::to_string(v) + " not in vocabulary");
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> VocabTable::entries() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out(next_id_);
  for (std::size_t w = 0; w < present_.size(); ++w) {
    for (std::uint64_t bits = present_[w]; bits != 0; bits &= bits - 1) {
      const auto v = static_cast<std::uint32_t>(w * 64 + std::countr_zero(bits));
      out[id_of_[v]] = {v, id_of_[v]};
    }
  }
  return out;
}

VocabTable VocabTable::from_ordered_values(std::uint32_t modulus,
                                           std::span<const std::uint32_t> values) {
  VocabTable table(modulus);
  for (const auto v : values) {
    if (table.observe(v) == Observe::Seen) {
      throw Error(ErrorCode::DuplicateWithinPart, "value " + std::to_string(v) + " listed twice");
    }
  }
  return table;
}

void write_vocab(std::ostream& out, const VocabTable& table) {
  std::string buf;
  buf.reserve(16 + std::size_t{8} * table.size());
  buf.append("PVOC", 4);
  le::append<std::uint32_t>(buf, kVocabVersion);
  le::append<std::uint32_t>(buf, table.modulus());
  le::append<std::uint32_t>(buf, table.size());
  for (const auto& [value, id] : table.entries()) {
    le::append<std::uint32_t>(buf, value);
    le::append<std::uint32_t>(buf, id);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing vocabulary");
}

VocabTable read_vocab(std::istream& in) {
  std::uint8_t header[16];
  if (!in.read(reinterpret_cast<char*>(header), sizeof header)) {
    throw Error(ErrorCode::ShortRead, "vocabulary header truncated");
  }
  if (std::memcmp(header, "PVOC", 4) != 0) throw Error(ErrorCode::BadMagic, "expected PVOC");
  if (le::load<std::uint32_t>(header + 4) != kVocabVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported vocabulary version");
  }
  const auto modulus = le::load<std::uint32_t>(header + 8);
  const auto count = le::load<std::uint32_t>(header + 12);
  if (modulus == 0 || count > modulus) {
    throw Error(ErrorCode::OutOfRange, "vocabulary header inconsistent");
  }
  std::vector<std::uint8_t> body(std::size_t{8} * count);
  if (!in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()))) {
    throw Error(ErrorCode::ShortRead, "vocabulary entries truncated");
  }
  std::vector<std::uint32_t> values(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    values[i] = le::load<std::uint32_t>(body.data() + 8 * i);
    if (le::load<std::uint32_t>(body.data() + 8 * i + 4) != i) {
      throw Error(ErrorCode::OutOfRange, "vocabulary ids must be contiguous and in order");
    }
  }
  return VocabTable::from_ordered_values(modulus, values);
}

void save_vocab_set(const std::filesystem::path& path, std::span<const VocabTable> tables) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  for (const auto& t : tables) write_vocab(out, t);
}

std::vector<VocabTable> load_vocab_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<VocabTable> tables;
  tables.reserve(kNumSparse);
  for (std::size_t c = 0; c < kNumSparse; ++c) tables.push_back(read_vocab(in));
  return tables;
}

}  // namespace piper

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "piper/decoder.hpp"
#include "piper/engine.hpp"
#include "piper/error.hpp"

namespace piper {

std::vector<TransformedRecord> reference_oracle(std::span<const DecodedRecord> records,
                                                const PipelineConfig& cfg_in) {
  const PipelineConfig cfg = validate_config(cfg_in);
  const std::uint32_t m = cfg.modulus;

  std::vector<TransformedRecord> out(records.size());
  for (std::size_t row = 0; row < records.size(); ++row) {
    const auto& rec = records[row];
    auto& o = out[row];
    o.label = rec.label;
    for (std::size_t d = 0; d < kNumDense; ++d) {
      const std::int32_t x = rec.dense[d] < 0 ? 0 : rec.dense[d];
      o.dense[d] = cfg.apply_log ? static_cast<float>(std::log(static_cast<double>(x) + 1.0))
                                 : static_cast<float>(x);
    }
  }

  // One column at a time: first scan assigns ids in order of first
  // appearance, second scan looks them up.
  std::unordered_map<std::uint32_t, std::uint32_t> ids;
  for (std::size_t c = 0; c < kNumSparse; ++c) {
    ids.clear();
    ids.reserve(std::min<std::size_t>(m, records.size()));
    for (const auto& rec : records) {
      ids.try_emplace(rec.sparse[c] % m, static_cast<std::uint32_t>(ids.size()));
    }
    for (std::size_t row = 0; row < records.size(); ++row) {
      const auto it = ids.find(records[row].sparse[c] % m);
      if (it == ids.end()) {
        throw Error(ErrorCode::MissingEntry, "oracle lookup failed", row,
                    static_cast<int>(kFirstSparseColumn + c));
      }
      out[row].sparse[c] = it->second;
    }
  }
  return out;
}

std::vector<TransformedRecord> reference_oracle(std::string_view utf8, const PipelineConfig& cfg) {
  const auto records = decode_scalar(utf8);
  return reference_oracle(records, cfg);
}

}  // namespace piper

#include "piper/schema.hpp"

#include <charconv>
#include <fstream>

#include "piper/error.hpp"

namespace piper {

DecodedRecord make_decoded(std::int32_t label, std::span<const std::int32_t> dense,
                           std::span<const std::uint32_t> sparse) {
  if (dense.size() != kNumDense || sparse.size() != kNumSparse) {
    throw Error(ErrorCode::ArityError, "expected " + std::to_string(kNumDense) + " dense and " +
                                           std::to_string(kNumSparse) + " sparse values, got " +
                                           std::to_string(dense.size()) + " and " +
                                           std::to_string(sparse.size()));
  }
  DecodedRecord r;
  r.label = label;
  std::copy(dense.begin(), dense.end(), r.dense.begin());
  std::copy(sparse.begin(), sparse.end(), r.sparse.begin());
  return r;
}

std::string_view to_string(Encoding e) noexcept { return e == Encoding::Utf8 ? "utf8" : "binary"; }
std::string_view to_string(Spill s) noexcept { return s == Spill::Memory ? "memory" : "disk"; }

Encoding parse_encoding(std::string_view text) {
  if (text == "utf8") return Encoding::Utf8;
  if (text == "binary") return Encoding::Binary;
  throw Error(ErrorCode::InvalidConfig, "input_encoding must be utf8 or binary, got '" +
                                            std::string(text) + "'");
}

Spill parse_spill(std::string_view text) {
  if (text == "memory") return Spill::Memory;
  if (text == "disk") return Spill::Disk;
  throw Error(ErrorCode::InvalidConfig, "intermediate_spill must be memory or disk, got '" +
                                            std::string(text) + "'");
}

PipelineConfig validate_config(const PipelineConfig& cfg) {
  if (cfg.modulus < 1) throw Error(ErrorCode::InvalidConfig, "modulus must be ≥ 1");
  if (cfg.decode_group_width != 1 && cfg.decode_group_width != 4) {
    throw Error(ErrorCode::InvalidConfig,
                "decode_group_width: unsupported group width " +
                    std::to_string(cfg.decode_group_width) + " (expected 1 or 4)");
  }
  if (cfg.channel_capacity < 1) throw Error(ErrorCode::InvalidConfig, "channel_capacity must be ≥ 1");
  if (cfg.rowwise_threads < 1) throw Error(ErrorCode::InvalidConfig, "rowwise_threads must be ≥ 1");
  return cfg;
}

namespace {

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidConfig,
                std::string(key) + ": expected an unsigned integer, got '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorCode::InvalidConfig,
              std::string(key) + ": expected a boolean, got '" + std::string(value) + "'");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "modulus") {
    cfg.modulus = parse_unsigned<std::uint32_t>(key, value);
  } else if (key == "decode_group_width") {
    cfg.decode_group_width = parse_unsigned<std::uint32_t>(key, value);
  } else if (key == "channel_capacity") {
    cfg.channel_capacity = parse_unsigned<std::size_t>(key, value);
  } else if (key == "rowwise_threads") {
    cfg.rowwise_threads = parse_unsigned<std::size_t>(key, value);
  } else if (key == "input_encoding") {
    cfg.input_encoding = parse_encoding(value);
  } else if (key == "intermediate_spill") {
    cfg.intermediate_spill = parse_spill(value);
  } else if (key == "apply_log") {
    cfg.apply_log = parse_bool(key, value);
  } else if (key == "spill_dir") {
    cfg.spill_dir = std::filesystem::path(std::string(value));
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
  }
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig,
                  path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    apply_setting(base, trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
  }
  return base;
}

}  // namespace piper

#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "piper/error.hpp"
#include "piper/schema.hpp"

using namespace piper;

namespace {

ErrorCode code_of(const PipelineConfig& cfg) {
  try {
    validate_config(cfg);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("column layout") {
  CHECK(kNumColumns == 40);
  CHECK(column_kind(0) == ColumnKind::Label);
  CHECK(column_kind(1) == ColumnKind::DenseDecimal);
  CHECK(column_kind(13) == ColumnKind::DenseDecimal);
  CHECK(column_kind(14) == ColumnKind::SparseHex);
  CHECK(column_kind(39) == ColumnKind::SparseHex);
}

TEST_CASE("make_decoded checks arity") {
  std::vector<std::int32_t> dense(13, 1);
  std::vector<std::uint32_t> sparse(26, 2);
  const auto r = make_decoded(1, dense, sparse);
  CHECK(r.label == 1);
  CHECK(r.sparse[25] == 2u);
  dense.pop_back();
  CHECK_THROWS_AS(make_decoded(0, dense, sparse), Error);
}

TEST_CASE("validate_config") {
  PipelineConfig ok;
  ok.modulus = 5000;
  ok.decode_group_width = 4;
  ok.rowwise_threads = 8;
  CHECK(validate_config(ok) == ok);
  CHECK(validate_config(validate_config(ok)) == ok);

  PipelineConfig zero_m = ok;
  zero_m.modulus = 0;
  CHECK(code_of(zero_m) == ErrorCode::InvalidConfig);
  try {
    validate_config(zero_m);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("modulus must be ≥ 1") != std::string::npos);
  }

  PipelineConfig w3 = ok;
  w3.decode_group_width = 3;
  try {
    validate_config(w3);
    FAIL("width 3 accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    CHECK(std::string(e.what()).find("unsupported group width") != std::string::npos);
  }

  PipelineConfig cap = ok;
  cap.channel_capacity = 0;
  CHECK(code_of(cap) == ErrorCode::InvalidConfig);
  PipelineConfig threads = ok;
  threads.rowwise_threads = 0;
  CHECK(code_of(threads) == ErrorCode::InvalidConfig);
}

TEST_CASE("config settings and files") {
  PipelineConfig cfg;
  apply_setting(cfg, "modulus", "1000000");
  apply_setting(cfg, "input_encoding", "binary");
  apply_setting(cfg, "apply_log", "false");
  CHECK(cfg.modulus == 1000000u);
  CHECK(cfg.input_encoding == Encoding::Binary);
  CHECK_FALSE(cfg.apply_log);
  CHECK_THROWS_AS(apply_setting(cfg, "nope", "1"), Error);
  CHECK_THROWS_AS(apply_setting(cfg, "modulus", "abc"), Error);
  CHECK_THROWS_AS(apply_setting(cfg, "intermediate_spill", "tape"), Error);

  const auto path = std::filesystem::temp_directory_path() / "piper_test_config.txt";
  {
    std::ofstream out(path);
    out << "# comment\n\nmodulus = 77\nrowwise_threads=3\nintermediate_spill=disk\n";
  }
  const auto loaded = load_config_file(path);
  CHECK(loaded.modulus == 77u);
  CHECK(loaded.rowwise_threads == 3u);
  CHECK(loaded.intermediate_spill == Spill::Disk);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config_file(path), Error);
}

TEST_CASE("encoding names round trip") {
  CHECK(parse_encoding(to_string(Encoding::Utf8)) == Encoding::Utf8);
  CHECK(parse_encoding(to_string(Encoding::Binary)) == Encoding::Binary);
  CHECK(parse_spill(to_string(Spill::Disk)) == Spill::Disk);
  CHECK_THROWS_AS(parse_encoding("latin1"), Error);
}

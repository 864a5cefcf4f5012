#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "piper/bench.hpp"
#include "piper/io_formats.hpp"
#include "test_support.hpp"

using namespace piper;

namespace {

std::filesystem::path temp_path(const char* name) { return std::filesystem::temp_directory_path() / name; }

std::vector<DecodedRecord> drain(const RecordSource& src) {
  auto stream = src.open();
  std::vector<DecodedRecord> all;
  std::vector<DecodedRecord> batch;
  while (stream->next(batch)) all.insert(all.end(), batch.begin(), batch.end());
  return all;
}

Error drain_error(const RecordSource& src) {
  try {
    drain(src);
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::Io, "unreachable");
}

DecodedRecord random_record(std::mt19937_64& rng) {
  DecodedRecord r;
  r.label = static_cast<std::int32_t>(rng());
  for (auto& d : r.dense) d = static_cast<std::int32_t>(rng());
  for (auto& s : r.sparse) s = static_cast<std::uint32_t>(rng());
  return r;
}

}  // namespace

TEST_CASE("pack_decoded layout") {
  const auto zero = pack_decoded(DecodedRecord{});
  CHECK(std::all_of(zero.begin(), zero.end(), [](std::uint8_t b) { return b == 0; }));
  DecodedRecord r;
  r.label = 1;
  r.dense[0] = -2;
  r.sparse[25] = 0x01020304;
  const auto b = pack_decoded(r);
  CHECK(b[0] == 1);
  CHECK(b[1] == 0);
  CHECK(b[2] == 0);
  CHECK(b[3] == 0);
  CHECK(b[4] == 0xFE);
  CHECK(b[7] == 0xFF);
  CHECK(b[156] == 4);
  CHECK(b[159] == 1);
  CHECK(unpack_decoded(b) == r);
  CHECK(unpack_decoded(zero) == DecodedRecord{});
}

TEST_CASE("pack_transformed layout") {
  TransformedRecord r;
  r.sparse[0] = 2;
  const auto b = pack_transformed(r);
  for (std::size_t i = 4; i < 56; ++i) CHECK(b[i] == 0);
  CHECK(b[56] == 2);
  CHECK(b[57] == 0);
  r.dense[0] = 1.5f;
  const auto c = pack_transformed(r);
  std::uint32_t bits = 0;
  std::memcpy(&bits, &r.dense[0], 4);
  CHECK(c[4] == (bits & 0xff));
  CHECK(c[7] == (bits >> 24));
  CHECK(unpack_transformed(c) == r);
}

TEST_CASE("pack and unpack round trip") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 2000; ++i) {
    const auto r = random_record(rng);
    const auto b = pack_decoded(r);
    REQUIRE(unpack_decoded(b) == r);
    REQUIRE(pack_decoded(unpack_decoded(b)) == b);
  }
  std::array<std::uint8_t, 100> short_buf{};
  CHECK_THROWS_AS(unpack_decoded(short_buf), Error);
}

TEST_CASE("header codec") {
  BinaryDatasetHeader h;
  h.kind = DatasetKind::Transformed;
  h.row_count = 0x0102030405060708ULL;
  const auto b = encode_header(h);
  CHECK(std::memcmp(b.data(), "PBIN", 4) == 0);
  CHECK(b[4] == 1);
  CHECK(b[6] == 2);
  CHECK(b[8] == 8);
  CHECK(b[15] == 1);
  CHECK(b[16] == 13);
  CHECK(b[17] == 26);
  for (std::size_t i = 18; i < 24; ++i) CHECK(b[i] == 0);
  CHECK(decode_header(b, DatasetKind::Transformed) == h);
  CHECK_THROWS_AS(decode_header(b, DatasetKind::Decoded), Error);

  auto bad = b;
  bad[0] = 'Q';
  try {
    decode_header(bad, DatasetKind::Transformed);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }
  bad = b;
  bad[4] = 9;
  try {
    decode_header(bad, DatasetKind::Transformed);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
  bad = b;
  bad[16] = 12;
  CHECK_THROWS_AS(decode_header(bad, DatasetKind::Transformed), Error);
}

TEST_CASE("utf8 and binary sources agree and follow the size law") {
  const std::string text = generate_dataset({777, 4, 0.2});
  const auto utf8_path = temp_path("piper_io_test.tsv");
  const auto bin_path = temp_path("piper_io_test.pbin");
  write_file(utf8_path, text);
  CHECK(convert_to_binary(utf8_path, bin_path) == 777u);
  CHECK(std::filesystem::file_size(bin_path) == kHeaderBytes + kRecordBytes * 777);

  const auto expected = decode_scalar(text);
  CHECK(drain(*read_source(utf8_path, Encoding::Utf8)) == expected);
  CHECK(drain(*read_source(bin_path, Encoding::Binary)) == expected);
  CHECK(drain(*load_source(bin_path, Encoding::Binary)) == expected);
  CHECK(drain(*read_source(utf8_path, Encoding::Utf8, 1)) == expected);
  // Replay: a second open yields the same stream.
  const auto src = read_source(bin_path, Encoding::Binary);
  CHECK(drain(*src) == drain(*src));
  CHECK(to_binary_image(text) == read_file(bin_path));

  SUBCASE("truncated file") {
    std::string bytes = read_file(bin_path);
    bytes.resize(kHeaderBytes + kRecordBytes * 500 + 70);
    write_file(bin_path, bytes);
    const auto e = drain_error(*read_source(bin_path, Encoding::Binary));
    CHECK(e.code() == ErrorCode::ShortRead);
    CHECK(e.row() == 500u);
  }
  SUBCASE("row count mismatch") {
    std::string bytes = read_file(bin_path);
    bytes.resize(kHeaderBytes + kRecordBytes * 500);
    write_file(bin_path, bytes);
    CHECK(drain_error(*read_source(bin_path, Encoding::Binary)).code() == ErrorCode::RowCountMismatch);
  }
  SUBCASE("bad magic") {
    std::string bytes = read_file(bin_path);
    bytes[1] = 'X';
    write_file(bin_path, bytes);
    CHECK(drain_error(*read_source(bin_path, Encoding::Binary)).code() == ErrorCode::BadMagic);
  }
  std::filesystem::remove(utf8_path);
  std::filesystem::remove(bin_path);
}

TEST_CASE("chunk stream ignores chunk boundaries") {
  const std::string text = generate_dataset({50, 8, 0.1});
  const std::string image = to_binary_image(text);
  const auto expected = decode_scalar(text);
  for (const std::size_t step : {1u, 3u, 7u, 160u, 4096u}) {
    for (const auto& [bytes, enc] : {std::pair{&text, Encoding::Utf8}, std::pair{&image, Encoding::Binary}}) {
      std::size_t pos = 0;
      const std::string* data = bytes;
      auto stream = make_chunk_stream(
          [&]() {
            const auto n = std::min(step, data->size() - pos);
            std::string_view v(data->data() + pos, n);
            pos += n;
            return v;
          },
          enc);
      std::vector<DecodedRecord> all;
      std::vector<DecodedRecord> batch;
      while (stream->next(batch)) all.insert(all.end(), batch.begin(), batch.end());
      CHECK(all == expected);
    }
  }
}

TEST_CASE("binary file sink writes header and records") {
  const auto path = temp_path("piper_sink_test.pbin");
  std::vector<TransformedRecord> recs(3);
  recs[1].label = 1;
  recs[2].sparse[4] = 9;
  {
    BinaryFileSink sink(path);
    sink.consume(std::span(recs).first(2));
    sink.consume(std::span(recs).subspan(2));
    sink.finish();
    CHECK(sink.rows() == 3u);
  }
  CHECK(std::filesystem::file_size(path) == kHeaderBytes + 3 * kRecordBytes);
  CHECK(read_transformed_file(path) == recs);
  std::filesystem::remove(path);
}

// piper: command-line front end for the preprocessing engines, the streaming
// server/client, dataset generation, and the benchmark harness.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "piper/bench.hpp"
#include "piper/engine.hpp"
#include "piper/error.hpp"
#include "piper/io_formats.hpp"
#include "piper/net.hpp"
#include "piper/ops.hpp"

namespace {

constexpr const char* kServerEnv = "PIPER_SERVER";
constexpr const char* kDefaultServer = "127.0.0.1:7878";

// Flags shared by the subcommands that run a pipeline. Values left unset keep
// whatever the config file (or the defaults) provided.
struct ConfigFlags {
  std::string config_file;
  std::uint32_t modulus = 0;
  std::uint32_t group_width = 0;
  std::size_t channel_capacity = 0;
  std::size_t threads = 0;
  std::string encoding;
  std::string spill;
  std::string spill_dir;
  bool no_log = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    app.add_option("--modulus", modulus, "vocabulary modulus M (e.g. 5000 or 1000000)");
    app.add_option("--group-width", group_width, "decoder bytes per step (1 or 4)");
    app.add_option("--channel-capacity", channel_capacity, "rows per inter-stage channel");
    app.add_option("--threads", threads, "row-wise worker threads");
    app.add_option("--encoding", encoding, "input encoding")->check(CLI::IsMember({"utf8", "binary"}));
    app.add_option("--spill", spill, "row-wise intermediates")->check(CLI::IsMember({"memory", "disk"}));
    app.add_option("--spill-dir", spill_dir, "directory for disk spill files");
    app.add_flag("--no-log", no_log, "skip log(x+1) on dense features");
  }

  piper::PipelineConfig build() const {
    piper::PipelineConfig cfg;
    if (!config_file.empty()) cfg = piper::load_config_file(config_file, cfg);
    if (modulus != 0) cfg.modulus = modulus;
    if (group_width != 0) cfg.decode_group_width = group_width;
    if (channel_capacity != 0) cfg.channel_capacity = channel_capacity;
    if (threads != 0) cfg.rowwise_threads = threads;
    if (!encoding.empty()) cfg.input_encoding = piper::parse_encoding(encoding);
    if (!spill.empty()) cfg.intermediate_spill = piper::parse_spill(spill);
    if (!spill_dir.empty()) cfg.spill_dir = spill_dir;
    if (no_log) cfg.apply_log = false;
    return piper::validate_config(cfg);
  }
};

std::string default_server() {
  const char* env = std::getenv(kServerEnv);
  return env != nullptr && *env != '\0' ? env : kDefaultServer;
}

void print_stats(const piper::RunStats& s) {
  std::cerr << "rows=" << s.rows_processed << " pass1_s=" << s.pass1_seconds
            << " pass2_s=" << s.pass2_seconds << " rows_per_second=" << s.rows_per_second << "\n";
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
}

template <typename T>
std::vector<T> parse_list(const std::vector<std::string>& items, T (*parse)(std::string_view)) {
  std::vector<T> out;
  for (const auto& item : items) out.push_back(parse(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-pass columnar preprocessing for Criteo-style datasets"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic UTF-8 dataset");
  piper::GenOptions gen_opts;
  std::string gen_out;
  gen->add_option("--rows", gen_opts.rows, "row count")->required();
  gen->add_option("--seed", gen_opts.seed, "RNG seed");
  gen->add_option("--missing-prob", gen_opts.missing_prob, "per-field empty probability")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", gen_out, "output path")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "run the pipeline locally");
  ConfigFlags pre_flags;
  pre_flags.attach(*pre);
  std::string pre_in, pre_out, pre_engine = "columnwise", pre_vocab;
  pre->add_option("--in", pre_in, "input dataset")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "transformed output file")->required();
  pre->add_option("--engine", pre_engine, "engine")->check(CLI::IsMember({"columnwise", "rowwise"}));
  pre->add_option("--save-vocab", pre_vocab, "write the vocabulary sidecar (columnwise only)");

  // to-binary
  auto* tobin = app.add_subcommand("to-binary", "decode a UTF-8 dataset into the binary format");
  std::string tobin_in, tobin_out;
  std::uint32_t tobin_width = 4;
  tobin->add_option("--in", tobin_in, "UTF-8 input")->required()->check(CLI::ExistingFile);
  tobin->add_option("--out", tobin_out, "binary output")->required();
  tobin->add_option("--group-width", tobin_width, "decoder bytes per step (1 or 4)");

  // serve
  auto* srv = app.add_subcommand("serve", "run the streaming preprocessing server");
  ConfigFlags srv_flags;
  srv_flags.attach(*srv);
  std::string srv_addr;
  std::size_t srv_budget_mib = 64;
  int srv_timeout_s = 30;
  srv->add_option("--addr", srv_addr, "listen address host:port (default $PIPER_SERVER)");
  srv->add_option("--budget-mib", srv_budget_mib, "per-session buffer budget in MiB");
  srv->add_option("--timeout", srv_timeout_s, "receive timeout in seconds");

  // send
  auto* snd = app.add_subcommand("send", "stream a dataset through a server");
  ConfigFlags snd_flags;
  snd_flags.attach(*snd);
  std::string snd_in, snd_out, snd_addr;
  snd->add_option("--in", snd_in, "input dataset")->required()->check(CLI::ExistingFile);
  snd->add_option("--out", snd_out, "transformed output file")->required();
  snd->add_option("--addr", snd_addr, "server address host:port (default $PIPER_SERVER)");

  // bench
  auto* bch = app.add_subcommand("bench", "throughput sweep, CSV output");
  ConfigFlags bch_flags;
  bch_flags.attach(*bch);
  piper::BenchOptions bopts;
  std::vector<std::string> bch_engines, bch_encodings;
  std::vector<std::size_t> bch_threads;
  std::vector<std::uint32_t> bch_moduli;
  std::string bch_out, bch_input;
  bch->add_option("--rows", bopts.rows, "rows to generate");
  bch->add_option("--seed", bopts.seed, "RNG seed");
  bch->add_option("--missing-prob", bopts.missing_prob, "per-field empty probability");
  bch->add_option("--input", bch_input, "pre-generated UTF-8 dataset")->check(CLI::ExistingFile);
  bch->add_option("--engine", bch_engines, "engines to sweep")->check(CLI::IsMember({"columnwise", "rowwise"}));
  bch->add_option("--thread-list", bch_threads, "row-wise thread counts");
  bch->add_option("--encoding-list", bch_encodings, "encodings to sweep")->check(CLI::IsMember({"utf8", "binary"}));
  bch->add_option("--modulus-list", bch_moduli, "vocabulary sizes to sweep");
  bch->add_option("--reps", bopts.reps, "timed repetitions per cell");
  bch->add_option("--out", bch_out, "CSV path (default stdout)");

  // verify
  auto* ver = app.add_subcommand("verify", "compare two dataset files byte for byte");
  std::string ver_a, ver_b;
  ver->add_option("a", ver_a)->required()->check(CLI::ExistingFile);
  ver->add_option("b", ver_b)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      piper::generate_dataset_file(gen_opts, gen_out);
    } else if (pre->parsed()) {
      const auto cfg = pre_flags.build();
      piper::BinaryFileSink sink(pre_out);
      piper::RunStats stats;
      if (pre_engine == "rowwise") {
        stats = piper::run_rowwise_baseline(piper::load_dataset(pre_in, cfg.input_encoding), cfg, sink,
                                            cfg.rowwise_threads);
      } else {
        piper::ColumnwiseEngine engine(cfg);
        const auto source = piper::read_source(pre_in, cfg.input_encoding, cfg.decode_group_width);
        stats = piper::run_columnwise(*source, engine, sink);
        if (!pre_vocab.empty()) piper::save_vocab_set(pre_vocab, engine.tables());
      }
      print_stats(stats);
    } else if (tobin->parsed()) {
      const auto rows = piper::convert_to_binary(tobin_in, tobin_out, tobin_width);
      std::cerr << "rows=" << rows << "\n";
    } else if (srv->parsed()) {
      const auto cfg = srv_flags.build();
      piper::net::ServerOptions opts;
      opts.buffer_budget_bytes = srv_budget_mib << 20;
      opts.recv_timeout = std::chrono::seconds(srv_timeout_s);
      piper::net::Server server(srv_addr.empty() ? default_server() : srv_addr, cfg, opts);
      std::cerr << "listening on port " << server.port() << "\n";
      server.run();
    } else if (snd->parsed()) {
      const auto cfg = snd_flags.build();
      const auto stats = piper::net::client_send(snd_in, snd_addr.empty() ? default_server() : snd_addr,
                                                 cfg, snd_out);
      print_stats(stats.run);
    } else if (bch->parsed()) {
      bopts.base = bch_flags.build();
      // A single-value flag narrows its sweep dimension unless the list form is given.
      if (!bch_engines.empty()) bopts.engines = parse_list(bch_engines, &piper::parse_engine);
      if (!bch_encodings.empty()) {
        bopts.encodings = parse_list(bch_encodings, &piper::parse_encoding);
      } else if (!bch_flags.encoding.empty()) {
        bopts.encodings = {bopts.base.input_encoding};
      }
      if (!bch_threads.empty()) {
        bopts.threads = bch_threads;
      } else if (bch_flags.threads != 0) {
        bopts.threads = {bch_flags.threads};
      }
      if (!bch_moduli.empty()) {
        bopts.moduli = bch_moduli;
      } else if (bch_flags.modulus != 0) {
        bopts.moduli = {bch_flags.modulus};
      }
      if (!bch_input.empty()) bopts.input = bch_input;
      const auto rows = piper::run_bench(bopts);
      std::ofstream file;
      if (!bch_out.empty()) file.open(bch_out);
      std::ostream& out = bch_out.empty() ? std::cout : file;
      piper::write_csv_header(out);
      for (const auto& row : rows) piper::write_csv_row(out, row);
    } else if (ver->parsed()) {
      const auto result = piper::verify_files(ver_a, ver_b);
      std::cout << result.describe() << "\n";
      return result.equal ? 0 : 1;
    }
  } catch (const piper::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

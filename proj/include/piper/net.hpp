#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "piper/engine.hpp"
#include "piper/error.hpp"
#include "piper/schema.hpp"

namespace piper::net {

// Wire protocol. All integers little-endian. Each pass opens with a 24-byte
// session header, followed by framed messages:
//
//   session header:  0 "PNET" | 4 version u16 | 6 pass u8 | 7 encoding u8
//                    8 session_id u64 | 16 modulus u32 | 20 apply_log u8 | 21..23 zero
//   frame:           0 type u8 | 1..3 zero | 4 length u32 | payload[length]
//
// Client: header(pass 1) DATA* END      Server: STATS
// Client: header(pass 2) DATA* END      Server: RESULT* STATS
// Any server-detected failure ends the session with one ERROR frame.

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kSessionHeaderBytes = 24;
inline constexpr std::size_t kFrameHeaderBytes = 8;
inline constexpr std::size_t kMaxFrameBytes = 1 << 20;
inline constexpr std::size_t kMaxResultRecords = kMaxFrameBytes / kRecordBytes;

enum class FrameType : std::uint8_t { Data = 1, End = 2, Result = 3, Stats = 4, Error = 5 };

enum class WireError : std::uint32_t { ProtocolViolation = 1, PassMismatch = 2, DecodeError = 3, Timeout = 4 };

struct SessionHeader {
  std::uint16_t version = kProtocolVersion;
  std::uint8_t pass_number = 1;
  Encoding input_encoding = Encoding::Utf8;
  std::uint64_t session_id = 0;
  std::uint32_t modulus = kSmallVocab;
  bool apply_log = true;

  friend bool operator==(const SessionHeader&, const SessionHeader&) = default;
};

std::array<std::uint8_t, kSessionHeaderBytes> encode_session_header(const SessionHeader& h);
/// Throws ProtocolViolation on bad magic, version, pass number or encoding.
SessionHeader decode_session_header(std::span<const std::uint8_t, kSessionHeaderBytes> bytes);

/// True when both headers describe the same session (all but pass_number).
bool same_session(const SessionHeader& a, const SessionHeader& b) noexcept;

// STATS payload: rows u64 | seconds f64 | n u32 | n x unique_count u32
struct StatsPayload {
  std::uint64_t rows = 0;
  double seconds = 0;
  std::array<std::uint32_t, kNumSparse> unique_counts{};

  friend bool operator==(const StatsPayload&, const StatsPayload&) = default;
};

std::string encode_stats(const StatsPayload& s);
StatsPayload decode_stats(std::string_view payload);

// ERROR payload: code u32 | row u64 | column i32 | message length u32 | message
struct ErrorPayload {
  WireError code = WireError::ProtocolViolation;
  std::uint64_t row = kNoRow;
  std::int32_t column = kNoColumn;
  std::string message;

  friend bool operator==(const ErrorPayload&, const ErrorPayload&) = default;
};

std::string encode_error(const ErrorPayload& e);
ErrorPayload decode_error(std::string_view payload);

/// Maps a server-side failure to its wire form.
ErrorPayload to_wire(const Error& e);
/// Client-side exception for a received ERROR frame.
Error from_wire(const ErrorPayload& e);

std::string encode_frame(FrameType type, std::string_view payload);

// ---------------------------------------------------------------------------

/// Owning TCP socket. All I/O is blocking; receive honours an optional timeout.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  /// Throws Transport on failure.
  void send_all(std::string_view bytes);
  /// Reads exactly n bytes. Returns false on orderly close before the first
  /// byte; throws Transport on a mid-read close, Timeout on timeout.
  bool recv_exact(void* dst, std::size_t n);
  void set_recv_timeout(std::chrono::milliseconds timeout);
  void shutdown_both() noexcept;

 private:
  int fd_ = -1;
};

/// "host:port"; host may be a name or dotted quad.
std::pair<std::string, std::uint16_t> parse_address(std::string_view address);
Socket connect_to(std::string_view address);

struct Frame {
  FrameType type;
  std::string payload;
};

void send_frame(Socket& s, FrameType type, std::string_view payload);
/// Throws ProtocolViolation on unknown types or oversize lengths; Transport if
/// the peer closes.
Frame recv_frame(Socket& s, std::size_t max_payload = kMaxFrameBytes);

// ---------------------------------------------------------------------------

struct ServerOptions {
  std::size_t max_frame_bytes = kMaxFrameBytes;
  /// Working memory a session may use for buffers, excluding vocabularies.
  /// Channel capacity is reduced when the estimate exceeds it.
  std::size_t buffer_budget_bytes = std::size_t{64} << 20;
  std::chrono::milliseconds recv_timeout{30000};
};

/// Upper bound on a session's buffer memory for the given settings
/// (vocabulary tables excluded).
std::size_t estimate_session_buffers(const PipelineConfig& cfg, std::size_t max_frame_bytes);

class Server {
 public:
  /// Binds immediately; port 0 picks an ephemeral port (see port()).
  Server(std::string_view listen_address, const PipelineConfig& cfg, ServerOptions opts = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  /// Accepts connections until stop(); each connection runs on its own thread.
  void run();
  void stop() noexcept;
  std::uint64_t sessions_completed() const noexcept { return completed_.load(); }

 private:
  void handle(Socket conn);

  PipelineConfig cfg_;
  ServerOptions opts_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> completed_{0};
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  void reap_finished();

  std::mutex mu_;
  std::vector<Worker> workers_;
};

/// Blocks serving `listen_address` until the process is stopped.
void serve(std::string_view listen_address, const PipelineConfig& cfg, ServerOptions opts = {});

// ---------------------------------------------------------------------------

struct ClientOptions {
  std::size_t frame_bytes = kMaxFrameBytes;  // DATA payload size
  std::uint64_t session_id = 0;              // 0: random
};

struct ClientStats {
  RunStats run;  // rows and unique counts as reported by the server
  double total_seconds = 0;
  std::uint64_t result_bytes = 0;
};

/// Streams the input twice through a server, handing every RESULT payload to
/// `on_result` in order. `open_input` is called once per pass.
ClientStats run_session(const std::function<ChunkReader()>& open_input, std::string_view address,
                        const PipelineConfig& cfg,
                        const std::function<void(std::string_view)>& on_result,
                        ClientOptions opts = {});

/// Sends a dataset file and writes the transformed dataset file `out`.
ClientStats client_send(const std::filesystem::path& in, std::string_view address,
                        const PipelineConfig& cfg, const std::filesystem::path& out,
                        ClientOptions opts = {});

/// In-memory variant: results are packed records without a file header.
ClientStats client_send_bytes(std::string_view data, std::string_view address,
                              const PipelineConfig& cfg, std::string& packed_out,
                              ClientOptions opts = {});

}  // namespace piper::net

#include "piper/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>

#include "piper/bytes.hpp"

namespace piper::net {

std::array<std::uint8_t, kSessionHeaderBytes> encode_session_header(const SessionHeader& h) {
  std::array<std::uint8_t, kSessionHeaderBytes> out{};
  std::memcpy(out.data(), "PNET", 4);
  le::store<std::uint16_t>(out.data() + 4, h.version);
  out[6] = h.pass_number;
  out[7] = static_cast<std::uint8_t>(h.input_encoding);
  le::store<std::uint64_t>(out.data() + 8, h.session_id);
  le::store<std::uint32_t>(out.data() + 16, h.modulus);
  out[20] = h.apply_log ? 1 : 0;
  return out;
}

SessionHeader decode_session_header(std::span<const std::uint8_t, kSessionHeaderBytes> bytes) {
  if (std::memcmp(bytes.data(), "PNET", 4) != 0) {
    throw Error(ErrorCode::ProtocolViolation, "session header must start with PNET");
  }
  SessionHeader h;
  h.version = le::load<std::uint16_t>(bytes.data() + 4);
  if (h.version != kProtocolVersion) {
    throw Error(ErrorCode::ProtocolViolation, "unsupported protocol version " + std::to_string(h.version));
  }
  h.pass_number = bytes[6];
  if (h.pass_number != 1 && h.pass_number != 2) {
    throw Error(ErrorCode::ProtocolViolation, "pass number must be 1 or 2");
  }
  if (bytes[7] > static_cast<std::uint8_t>(Encoding::Binary)) {
    throw Error(ErrorCode::ProtocolViolation, "unknown input encoding " + std::to_string(bytes[7]));
  }
  h.input_encoding = static_cast<Encoding>(bytes[7]);
  h.session_id = le::load<std::uint64_t>(bytes.data() + 8);
  h.modulus = le::load<std::uint32_t>(bytes.data() + 16);
  if (bytes[20] > 1) throw Error(ErrorCode::ProtocolViolation, "apply_log flag must be 0 or 1");
  h.apply_log = bytes[20] == 1;
  return h;
}

bool same_session(const SessionHeader& a, const SessionHeader& b) noexcept {
  return a.version == b.version && a.input_encoding == b.input_encoding &&
         a.session_id == b.session_id && a.modulus == b.modulus && a.apply_log == b.apply_log;
}

std::string encode_stats(const StatsPayload& s) {
  std::string out;
  le::append<std::uint64_t>(out, s.rows);
  le::append<double>(out, s.seconds);
  le::append<std::uint32_t>(out, kNumSparse);
  for (const auto u : s.unique_counts) le::append<std::uint32_t>(out, u);
  return out;
}

StatsPayload decode_stats(std::string_view payload) {
  constexpr std::size_t kSize = 8 + 8 + 4 + 4 * kNumSparse;
  if (payload.size() != kSize) throw Error(ErrorCode::ProtocolViolation, "malformed STATS payload");
  const auto* p = reinterpret_cast<const std::uint8_t*>(payload.data());
  if (le::load<std::uint32_t>(p + 16) != kNumSparse) {
    throw Error(ErrorCode::ProtocolViolation, "STATS column count mismatch");
  }
  StatsPayload s;
  s.rows = le::load<std::uint64_t>(p);
  s.seconds = le::load<double>(p + 8);
  for (std::size_t c = 0; c < kNumSparse; ++c) s.unique_counts[c] = le::load<std::uint32_t>(p + 20 + 4 * c);
  return s;
}

std::string encode_error(const ErrorPayload& e) {
  std::string out;
  le::append<std::uint32_t>(out, static_cast<std::uint32_t>(e.code));
  le::append<std::uint64_t>(out, e.row);
  le::append<std::int32_t>(out, e.column);
  le::append<std::uint32_t>(out, static_cast<std::uint32_t>(e.message.size()));
  out += e.message;
  return out;
}

ErrorPayload decode_error(std::string_view payload) {
  if (payload.size() < 20) throw Error(ErrorCode::ProtocolViolation, "malformed ERROR payload");
  const auto* p = reinterpret_cast<const std::uint8_t*>(payload.data());
  ErrorPayload e;
  const auto code = le::load<std::uint32_t>(p);
  if (code < 1 || code > 4) throw Error(ErrorCode::ProtocolViolation, "unknown error code");
  e.code = static_cast<WireError>(code);
  e.row = le::load<std::uint64_t>(p + 4);
  e.column = le::load<std::int32_t>(p + 12);
  const auto len = le::load<std::uint32_t>(p + 16);
  if (payload.size() != 20 + std::size_t{len}) {
    throw Error(ErrorCode::ProtocolViolation, "ERROR message length mismatch");
  }
  e.message.assign(payload.substr(20));
  return e;
}

ErrorPayload to_wire(const Error& e) {
  ErrorPayload out;
  out.row = e.row();
  out.column = e.column();
  out.message = e.what();
  switch (e.code()) {
    case ErrorCode::Timeout: out.code = WireError::Timeout; break;
    case ErrorCode::PassMismatch:
    case ErrorCode::MissingEntry: out.code = WireError::PassMismatch; break;
    case ErrorCode::InvalidByte:
    case ErrorCode::FieldOverflow:
    case ErrorCode::ArityError:
    case ErrorCode::BadMagic:
    case ErrorCode::VersionMismatch:
    case ErrorCode::ShortRead:
    case ErrorCode::RowCountMismatch: out.code = WireError::DecodeError; break;
    default: out.code = WireError::ProtocolViolation; break;
  }
  return out;
}

Error from_wire(const ErrorPayload& e) {
  ErrorCode code = ErrorCode::ProtocolViolation;
  switch (e.code) {
    case WireError::ProtocolViolation: code = ErrorCode::ProtocolViolation; break;
    case WireError::PassMismatch: code = ErrorCode::PassMismatch; break;
    case WireError::DecodeError: code = ErrorCode::DecodeError; break;
    case WireError::Timeout: code = ErrorCode::Timeout; break;
  }
  return Error(code, "server: " + e.message, e.row, e.column);
}

std::string encode_frame(FrameType type, std::string_view payload) {
  std::string out;
  out.reserve(kFrameHeaderBytes + payload.size());
  out.push_back(static_cast<char>(type));
  out.append(3, '\0');
  le::append<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  out.append(payload);
  return out;
}

// ---------------------------------------------------------------------------

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

void Socket::send_all(std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, std::string("send: ") + std::strerror(errno));
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

bool Socket::recv_exact(void* dst, std::size_t n) {
  auto* p = static_cast<char*>(dst);
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd_, p + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::Transport, "connection closed mid-message");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw Error(ErrorCode::Timeout, "receive timed out");
      throw Error(ErrorCode::Transport, std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void Socket::set_recv_timeout(std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void Socket::shutdown_both() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::pair<std::string, std::uint16_t> parse_address(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::InvalidConfig, "address must be host:port, got '" + std::string(address) + "'");
  }
  std::string host(address.substr(0, colon));
  if (host.empty()) host = "0.0.0.0";
  const auto port_text = address.substr(colon + 1);
  std::uint16_t port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size()) {
    throw Error(ErrorCode::InvalidConfig, "bad port in '" + std::string(address) + "'");
  }
  return {host, port};
}

namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorCode::Transport, "cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Socket connect_to(std::string_view address) {
  const auto [host, port] = parse_address(address);
  const sockaddr_in addr = resolve(host, port);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw Error(ErrorCode::Transport, std::string("socket: ") + std::strerror(errno));
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(ErrorCode::Transport,
                "connect to " + std::string(address) + ": " + std::strerror(errno));
  }
  set_nodelay(s.fd());
  return s;
}

void send_frame(Socket& s, FrameType type, std::string_view payload) {
  std::uint8_t header[kFrameHeaderBytes] = {static_cast<std::uint8_t>(type), 0, 0, 0};
  le::store<std::uint32_t>(header + 4, static_cast<std::uint32_t>(payload.size()));
  s.send_all({reinterpret_cast<const char*>(header), kFrameHeaderBytes});
  if (!payload.empty()) s.send_all(payload);
}

Frame recv_frame(Socket& s, std::size_t max_payload) {
  std::uint8_t header[kFrameHeaderBytes];
  if (!s.recv_exact(header, sizeof header)) throw Error(ErrorCode::Transport, "peer closed the connection");
  const std::uint8_t type = header[0];
  if (type < static_cast<std::uint8_t>(FrameType::Data) || type > static_cast<std::uint8_t>(FrameType::Error)) {
    throw Error(ErrorCode::ProtocolViolation, "unknown frame type " + std::to_string(type));
  }
  const auto length = le::load<std::uint32_t>(header + 4);
  if (length > max_payload) {
    throw Error(ErrorCode::ProtocolViolation, "frame of " + std::to_string(length) +
                                                  " bytes exceeds the " + std::to_string(max_payload) +
                                                  "-byte limit");
  }
  Frame f{static_cast<FrameType>(type), std::string(length, '\0')};
  if (length > 0 && !s.recv_exact(f.payload.data(), length)) {
    throw Error(ErrorCode::Transport, "peer closed the connection");
  }
  return f;
}

// ---------------------------------------------------------------------------

std::size_t estimate_session_buffers(const PipelineConfig& cfg, std::size_t max_frame_bytes) {
  constexpr std::size_t kMinRowBytes = kNumColumns;  // 39 tabs and a newline
  constexpr std::size_t kBlockRows = 2048;
  const std::size_t block_rows = std::min(kBlockRows, cfg.channel_capacity);
  const std::size_t decoded_batch = (max_frame_bytes / kMinRowBytes + 1) * kRecordBytes;
  const std::size_t frame_in = max_frame_bytes;
  const std::size_t binary_pending = max_frame_bytes + 1024 * kRecordBytes;
  // Input and output channels, plus blocks held by the demultiplexer, the
  // lanes and the remultiplexer.
  const std::size_t channels = 2 * cfg.channel_capacity * 4 * kNumColumns;
  const std::size_t in_flight = 4 * block_rows * 4 * kNumColumns + block_rows * kRecordBytes;
  const std::size_t result = 2 * max_frame_bytes;
  return frame_in + decoded_batch + binary_pending + channels + in_flight + result;
}

namespace {

// Feeds DATA payloads of one pass to a record stream; END ends the pass.
class FrameChunkReader {
 public:
  FrameChunkReader(Socket& socket, std::size_t max_frame) : socket_(&socket), max_frame_(max_frame) {}

  std::string_view operator()() {
    while (!ended_) {
      Frame f = recv_frame(*socket_, max_frame_);
      if (f.type == FrameType::End) {
        if (!f.payload.empty()) throw Error(ErrorCode::ProtocolViolation, "END carries no payload");
        ended_ = true;
        break;
      }
      if (f.type != FrameType::Data) {
        throw Error(ErrorCode::ProtocolViolation, "expected DATA or END from client");
      }
      if (f.payload.empty()) continue;
      buf_ = std::move(f.payload);
      return buf_;
    }
    buf_ = {};
    return {};
  }

  bool ended() const noexcept { return ended_; }

 private:
  Socket* socket_;
  std::size_t max_frame_;
  std::string buf_;
  bool ended_ = false;
};

class ResultSink final : public RecordSink {
 public:
  ResultSink(Socket& socket, std::size_t max_frame)
      : socket_(&socket), frame_records_(std::max<std::size_t>(1, max_frame / kRecordBytes)) {
    buf_.reserve(frame_records_ * kRecordBytes);
  }

  void consume(std::span<const TransformedRecord> records) override {
    while (!records.empty()) {
      const std::size_t room = frame_records_ - buf_.size() / kRecordBytes;
      const std::size_t take = std::min(room, records.size());
      append_packed(buf_, records.first(take));
      records = records.subspan(take);
      if (buf_.size() == frame_records_ * kRecordBytes) flush();
    }
  }

  void finish() override { flush(); }

 private:
  void flush() {
    if (buf_.empty()) return;
    send_frame(*socket_, FrameType::Result, buf_);
    buf_.clear();
  }

  Socket* socket_;
  std::size_t frame_records_;
  std::string buf_;
};

SessionHeader read_session_header(Socket& s, bool& closed) {
  std::array<std::uint8_t, kSessionHeaderBytes> bytes;
  closed = !s.recv_exact(bytes.data(), bytes.size());
  if (closed) return {};
  return decode_session_header(bytes);
}

// Sends ERROR, then drains whatever the client still has in flight so that
// closing does not reset the connection before the frame is read.
void reply_error(Socket& conn, const ErrorPayload& error) {
  try {
    send_frame(conn, FrameType::Error, encode_error(error));
  } catch (...) {
    return;
  }
  ::shutdown(conn.fd(), SHUT_WR);
  conn.set_recv_timeout(std::chrono::milliseconds(2000));
  char scratch[64 * 1024];
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (std::chrono::steady_clock::now() < deadline) {
    const ssize_t n = ::recv(conn.fd(), scratch, sizeof scratch, 0);
    if (n <= 0) break;
  }
}

int listen_on(std::string_view address, std::uint16_t& bound_port) {
  const auto [host, port] = parse_address(address);
  const sockaddr_in addr = resolve(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::Transport, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorCode::Transport, "cannot listen on " + std::string(address) + ": " + why);
  }
  sockaddr_in actual{};
  socklen_t len = sizeof actual;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&actual), &len);
  bound_port = ntohs(actual.sin_port);
  return fd;
}

}  // namespace

Server::Server(std::string_view listen_address, const PipelineConfig& cfg, ServerOptions opts)
    : cfg_(validate_config(cfg)), opts_(opts) {
  if (opts_.max_frame_bytes < kRecordBytes || opts_.max_frame_bytes > kMaxFrameBytes) {
    throw Error(ErrorCode::InvalidConfig, "max_frame_bytes must be within [160, 1 MiB]");
  }
  listener_ = Socket(listen_on(listen_address, port_));
}

Server::~Server() {
  stop();
  std::lock_guard lock(mu_);
  for (auto& w : workers_) {
    if (w.thread.joinable()) w.thread.join();
  }
}

void Server::reap_finished() {
  std::lock_guard lock(mu_);
  std::erase_if(workers_, [](Worker& w) {
    if (!w.done->load()) return false;
    w.thread.join();
    return true;
  });
}

void Server::stop() noexcept { stopping_.store(true); }

void Server::run() {
  while (!stopping_.load()) {
    pollfd pfd{listener_.fd(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    reap_finished();
    if (ready <= 0) continue;
    const int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(mu_);
    workers_.push_back({std::thread([this, fd, done] {
                          handle(Socket(fd));
                          done->store(true);
                        }),
                        done});
  }
}

void Server::handle(Socket conn) {
  conn.set_recv_timeout(opts_.recv_timeout);
  try {
    bool closed = false;
    const SessionHeader first = read_session_header(conn, closed);
    if (closed) return;
    if (first.pass_number != 1) {
      throw Error(ErrorCode::ProtocolViolation,
                  "pass 2 for unknown session " + std::to_string(first.session_id));
    }

    PipelineConfig cfg = cfg_;
    cfg.modulus = first.modulus;
    cfg.apply_log = first.apply_log;
    cfg.input_encoding = first.input_encoding;
    try {
      cfg = validate_config(cfg);
    } catch (const Error& e) {
      throw Error(ErrorCode::ProtocolViolation, e.detail());
    }
    while (cfg.channel_capacity > 1 &&
           estimate_session_buffers(cfg, opts_.max_frame_bytes) > opts_.buffer_budget_bytes) {
      cfg.channel_capacity /= 2;
    }

    using clock = std::chrono::steady_clock;
    ColumnwiseEngine engine(cfg);

    auto t0 = clock::now();
    FrameChunkReader pass1(conn, opts_.max_frame_bytes);
    std::uint64_t rows1 = 0;
    {
      auto stream = make_chunk_stream(std::ref(pass1), cfg.input_encoding, cfg.decode_group_width);
      rows1 = engine.build_vocab(*stream);
    }
    StatsPayload stats1{rows1, std::chrono::duration<double>(clock::now() - t0).count(),
                        engine.unique_counts()};
    send_frame(conn, FrameType::Stats, encode_stats(stats1));

    const SessionHeader second = read_session_header(conn, closed);
    if (closed) return;
    if (second.pass_number != 2 || !same_session(first, second)) {
      throw Error(ErrorCode::ProtocolViolation, "second pass does not continue session " +
                                                    std::to_string(first.session_id));
    }

    t0 = clock::now();
    FrameChunkReader pass2(conn, opts_.max_frame_bytes);
    ResultSink sink(conn, opts_.max_frame_bytes);
    std::uint64_t rows2 = 0;
    {
      auto stream = make_chunk_stream(std::ref(pass2), cfg.input_encoding, cfg.decode_group_width);
      rows2 = engine.apply_vocab(*stream, sink);
    }
    sink.finish();
    if (rows2 != rows1) {
      throw Error(ErrorCode::PassMismatch, "pass 2 carried " + std::to_string(rows2) +
                                               " rows, pass 1 carried " + std::to_string(rows1));
    }
    StatsPayload stats2{rows2, std::chrono::duration<double>(clock::now() - t0).count(),
                        engine.unique_counts()};
    send_frame(conn, FrameType::Stats, encode_stats(stats2));
    completed_.fetch_add(1);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Transport) return;  // peer is gone
    reply_error(conn, to_wire(e));
  } catch (const std::exception& e) {
    reply_error(conn, {WireError::ProtocolViolation, kNoRow, kNoColumn, e.what()});
  }
  conn.shutdown_both();
}

void serve(std::string_view listen_address, const PipelineConfig& cfg, ServerOptions opts) {
  Server server(listen_address, cfg, opts);
  server.run();
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void throw_unexpected(const Frame& f) {
  if (f.type == FrameType::Error) throw from_wire(decode_error(f.payload));
  throw Error(ErrorCode::ProtocolViolation,
              "unexpected frame type " + std::to_string(static_cast<int>(f.type)) + " from server");
}

// Sends one pass worth of DATA frames followed by END. Returns false if the
// server hung up, in which case its ERROR frame is usually waiting to be read.
bool send_pass(Socket& s, const SessionHeader& header, ChunkReader reader, std::size_t frame_bytes) {
  try {
    const auto h = encode_session_header(header);
    s.send_all({reinterpret_cast<const char*>(h.data()), h.size()});
    for (std::string_view chunk = reader(); !chunk.empty(); chunk = reader()) {
      while (!chunk.empty()) {
        const std::size_t n = std::min(frame_bytes, chunk.size());
        send_frame(s, FrameType::Data, chunk.substr(0, n));
        chunk.remove_prefix(n);
      }
    }
    send_frame(s, FrameType::End, {});
    return true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Transport) throw;
    return false;
  }
}

}  // namespace

ClientStats run_session(const std::function<ChunkReader()>& open_input, std::string_view address,
                        const PipelineConfig& cfg_in,
                        const std::function<void(std::string_view)>& on_result, ClientOptions opts) {
  const PipelineConfig cfg = validate_config(cfg_in);
  if (opts.frame_bytes == 0 || opts.frame_bytes > kMaxFrameBytes) {
    throw Error(ErrorCode::InvalidConfig, "frame_bytes must be within [1, 1 MiB]");
  }
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  Socket s = connect_to(address);

  SessionHeader header;
  header.input_encoding = cfg.input_encoding;
  header.modulus = cfg.modulus;
  header.apply_log = cfg.apply_log;
  header.session_id = opts.session_id;
  if (header.session_id == 0) header.session_id = std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32);

  ClientStats out;

  // Pass 1: vocabulary.
  header.pass_number = 1;
  const bool sent1 = send_pass(s, header, open_input(), opts.frame_bytes);
  Frame reply = recv_frame(s);
  if (reply.type != FrameType::Stats) throw_unexpected(reply);
  if (!sent1) throw Error(ErrorCode::Transport, "server closed the connection during pass 1");
  const StatsPayload stats1 = decode_stats(reply.payload);
  const auto t1 = clock::now();

  // Pass 2: results stream back while the data is still being sent.
  header.pass_number = 2;
  std::exception_ptr receive_error;
  StatsPayload stats2;
  std::thread receiver([&] {
    try {
      for (;;) {
        Frame f = recv_frame(s);
        if (f.type == FrameType::Result) {
          if (f.payload.size() % kRecordBytes != 0) {
            throw Error(ErrorCode::ProtocolViolation, "RESULT payload is not whole records");
          }
          out.result_bytes += f.payload.size();
          on_result(f.payload);
        } else if (f.type == FrameType::Stats) {
          stats2 = decode_stats(f.payload);
          return;
        } else {
          throw_unexpected(f);
        }
      }
    } catch (...) {
      receive_error = std::current_exception();
      s.shutdown_both();  // unblocks a sender stuck on a full socket
    }
  });
  bool sent2 = false;
  try {
    sent2 = send_pass(s, header, open_input(), opts.frame_bytes);
  } catch (...) {
    s.shutdown_both();
    receiver.join();
    throw;
  }
  receiver.join();
  if (receive_error) std::rethrow_exception(receive_error);
  if (!sent2) throw Error(ErrorCode::Transport, "server closed the connection during pass 2");
  const auto t2 = clock::now();

  out.run.rows_processed = stats2.rows;
  out.run.unique_counts = stats1.unique_counts;
  out.run.pass1_seconds = std::chrono::duration<double>(t1 - start).count();
  out.run.pass2_seconds = std::chrono::duration<double>(t2 - t1).count();
  out.run.finalize_rate();
  out.total_seconds = out.run.pass1_seconds + out.run.pass2_seconds;
  return out;
}

ClientStats client_send(const std::filesystem::path& in, std::string_view address,
                        const PipelineConfig& cfg, const std::filesystem::path& out,
                        ClientOptions opts) {
  if (!std::filesystem::exists(in)) throw Error(ErrorCode::Io, "no such file " + in.string());
  const std::size_t chunk = opts.frame_bytes == 0 ? kMaxFrameBytes : opts.frame_bytes;
  const auto open_input = [&]() -> ChunkReader {
    auto file = std::make_shared<std::ifstream>(in, std::ios::binary);
    if (!*file) throw Error(ErrorCode::Io, "cannot open " + in.string());
    auto buf = std::make_shared<std::string>(chunk, '\0');
    return [file, buf]() -> std::string_view {
      file->read(buf->data(), static_cast<std::streamsize>(buf->size()));
      return {buf->data(), static_cast<std::size_t>(file->gcount())};
    };
  };

  std::ofstream sink(out, std::ios::binary | std::ios::trunc);
  if (!sink) throw Error(ErrorCode::Io, "cannot open " + out.string());
  const auto header = encode_header({.kind = DatasetKind::Transformed});
  sink.write(reinterpret_cast<const char*>(header.data()), kHeaderBytes);

  ClientStats stats = run_session(
      open_input, address, cfg,
      [&](std::string_view payload) {
        sink.write(payload.data(), static_cast<std::streamsize>(payload.size()));
      },
      opts);

  std::uint8_t count[8];
  le::store<std::uint64_t>(count, stats.result_bytes / kRecordBytes);
  sink.seekp(8);
  sink.write(reinterpret_cast<const char*>(count), sizeof count);
  sink.close();
  if (!sink) throw Error(ErrorCode::Io, "failed writing " + out.string());
  return stats;
}

ClientStats client_send_bytes(std::string_view data, std::string_view address,
                              const PipelineConfig& cfg, std::string& packed_out, ClientOptions opts) {
  const std::size_t chunk = opts.frame_bytes == 0 ? kMaxFrameBytes : opts.frame_bytes;
  const auto open_input = [&]() -> ChunkReader {
    auto offset = std::make_shared<std::size_t>(0);
    return [data, offset, chunk]() -> std::string_view {
      const std::size_t n = std::min(chunk, data.size() - *offset);
      std::string_view out = data.substr(*offset, n);
      *offset += n;
      return out;
    };
  };
  packed_out.clear();
  return run_session(open_input, address, cfg,
                     [&](std::string_view payload) { packed_out.append(payload); }, opts);
}

}  // namespace piper::net

#include "droem/serve.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <filesystem>
#include <mutex>
#include <limits>
#include <thread>

namespace droem::serve {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

json error_message(const std::string& code, const std::string& detail) {
  return {{"type", "error"}, {"code", code}, {"detail", detail}};
}

std::string websocket_accept(const std::string& key) {
  const std::string src = key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(src.data(), src.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  return render::base64_encode(std::vector<std::uint8_t>(md, md + len));
}

namespace {

// ---------------------------------------------------------------------------
// Byte transport

bool send_all(int fd, const void* data, std::size_t n) {
  const auto* p = static_cast<const char*>(data);
  while (n > 0) {
    const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
    if (k < 0 && errno == EINTR) continue;
    if (k <= 0) return false;
    p += k;
    n -= static_cast<std::size_t>(k);
  }
  return true;
}

// Reads up to n bytes; waits at most timeout_ms (negative: forever).
// Returns bytes read, 0 on orderly close, -1 on error and -2 on timeout.
ssize_t recv_some(int fd, char* buf, std::size_t n, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&p, 1, timeout_ms);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) return -1;
    if (r == 0) return -2;
    break;
  }
  for (;;) {
    const ssize_t k = ::recv(fd, buf, n, 0);
    if (k < 0 && errno == EINTR) continue;
    return k;
  }
}

// Buffered reader over a socket.
class Reader {
 public:
  explicit Reader(int fd) : fd_(fd) {}

  // Blocks until n bytes are buffered; false on close or timeout.
  bool fill(std::size_t n, int timeout_ms = -1) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    while (buf_.size() < n) {
      int wait = -1;
      if (timeout_ms >= 0) {
        wait = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count());
        if (wait <= 0) return false;
      }
      char tmp[4096];
      const ssize_t k = recv_some(fd_, tmp, sizeof tmp, wait);
      if (k <= 0) return false;
      buf_.append(tmp, static_cast<std::size_t>(k));
    }
    return true;
  }

  std::string take(std::size_t n) {
    std::string out = buf_.substr(0, n);
    buf_.erase(0, n);
    return out;
  }

  // Up to and excluding the delimiter, which is consumed.
  std::optional<std::string> until(const std::string& delim, int timeout_ms = -1, std::size_t limit = 1 << 24) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    std::size_t scanned = 0;
    for (;;) {
      const auto pos = buf_.find(delim, scanned);
      if (pos != std::string::npos) {
        std::string out = buf_.substr(0, pos);
        buf_.erase(0, pos + delim.size());
        return out;
      }
      if (buf_.size() > limit) return std::nullopt;
      scanned = buf_.size() >= delim.size() ? buf_.size() - delim.size() + 1 : 0;
      int wait = -1;
      if (timeout_ms >= 0) {
        wait = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count());
        if (wait <= 0) return std::nullopt;
      }
      char tmp[4096];
      const ssize_t k = recv_some(fd_, tmp, sizeof tmp, wait);
      if (k <= 0) return std::nullopt;
      buf_.append(tmp, static_cast<std::size_t>(k));
    }
  }

  const std::string& buffered() const { return buf_; }

 private:
  int fd_;
  std::string buf_;
};

// One ND-JSON line per message, raw or inside WebSocket text frames.
class Channel {
 public:
  Channel(int fd, bool websocket, bool mask_output) : fd_(fd), reader_(fd), ws_(websocket), mask_(mask_output) {}

  Reader& reader() { return reader_; }

  std::optional<std::string> read_line(int timeout_ms = -1) {
    if (!ws_) return reader_.until("\n", timeout_ms);
    while (lines_.empty()) {
      auto msg = read_ws_message(timeout_ms);
      if (!msg) return std::nullopt;
      std::size_t start = 0;
      while (start <= msg->size()) {
        const auto nl = msg->find('\n', start);
        const std::string part = msg->substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        if (part.find_first_not_of(" \t\r") != std::string::npos) lines_.push_back(part);
        if (nl == std::string::npos) break;
        start = nl + 1;
      }
    }
    std::string out = std::move(lines_.front());
    lines_.pop_front();
    return out;
  }

  bool write_line(const std::string& line) {
    std::lock_guard lock(write_mu_);
    if (!ws_) {
      const std::string s = line + "\n";
      return send_all(fd_, s.data(), s.size());
    }
    return write_ws_frame(0x1, line);
  }

  void close_output() {
    std::lock_guard lock(write_mu_);
    if (ws_) write_ws_frame(0x8, std::string("\x03\xe8", 2));
    ::shutdown(fd_, SHUT_WR);
  }

 private:
  std::optional<std::string> read_ws_message(int timeout_ms) {
    std::string message;
    for (;;) {
      if (!reader_.fill(2, timeout_ms)) return std::nullopt;
      const std::string head = reader_.take(2);
      const bool fin = (head[0] & 0x80) != 0;
      const int opcode = head[0] & 0x0f;
      const bool masked = (head[1] & 0x80) != 0;
      std::uint64_t len = head[1] & 0x7f;
      if (len == 126 || len == 127) {
        const std::size_t nb = len == 126 ? 2 : 8;
        if (!reader_.fill(nb)) return std::nullopt;
        const std::string ext = reader_.take(nb);
        len = 0;
        for (unsigned char c : ext) len = (len << 8) | c;
      }
      if (len > (1u << 24)) return std::nullopt;
      std::string key;
      if (masked) {
        if (!reader_.fill(4)) return std::nullopt;
        key = reader_.take(4);
      }
      if (!reader_.fill(len)) return std::nullopt;
      std::string payload = reader_.take(len);
      if (masked)
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);
      switch (opcode) {
        case 0x8:
          return std::nullopt;
        case 0x9: {
          std::lock_guard lock(write_mu_);
          write_ws_frame(0xA, payload);
          continue;
        }
        case 0xA:
          continue;
        default:
          message += payload;
          if (fin) return message;
      }
    }
  }

  // Caller holds write_mu_.
  bool write_ws_frame(int opcode, const std::string& payload) {
    std::string frame;
    frame.push_back(static_cast<char>(0x80 | opcode));
    const std::uint64_t n = payload.size();
    const char mask_bit = mask_ ? static_cast<char>(0x80) : 0;
    if (n < 126) {
      frame.push_back(static_cast<char>(mask_bit | n));
    } else if (n < 65536) {
      frame.push_back(static_cast<char>(mask_bit | 126));
      frame.push_back(static_cast<char>(n >> 8));
      frame.push_back(static_cast<char>(n & 0xff));
    } else {
      frame.push_back(static_cast<char>(mask_bit | 127));
      for (int b = 7; b >= 0; --b) frame.push_back(static_cast<char>((n >> (8 * b)) & 0xff));
    }
    if (mask_) {
      unsigned char key[4];
      RAND_bytes(key, 4);
      frame.append(reinterpret_cast<char*>(key), 4);
      for (std::size_t i = 0; i < payload.size(); ++i) frame.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
    } else {
      frame += payload;
    }
    return send_all(fd_, frame.data(), frame.size());
  }

  int fd_;
  Reader reader_;
  bool ws_;
  bool mask_;
  std::mutex write_mu_;
  std::deque<std::string> lines_;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Server side of the opening handshake; false when the request is not a
// WebSocket upgrade.
bool accept_websocket(Channel& ch, int fd) {
  auto request = ch.reader().until("\r\n\r\n", 5000, 65536);
  if (!request) return false;
  std::string key;
  std::size_t pos = 0;
  while (pos < request->size()) {
    auto end = request->find("\r\n", pos);
    if (end == std::string::npos) end = request->size();
    const std::string line = request->substr(pos, end - pos);
    const auto colon = line.find(':');
    if (colon != std::string::npos && lower(line.substr(0, colon)) == "sec-websocket-key") {
      key = line.substr(colon + 1);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
    }
    pos = end + 2;
  }
  if (key.empty()) {
    const std::string resp = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
    send_all(fd, resp.data(), resp.size());
    return false;
  }
  const std::string resp =
      "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
      websocket_accept(key) + "\r\n\r\n";
  return send_all(fd, resp.data(), resp.size());
}

// ---------------------------------------------------------------------------
// Session plumbing

struct Item {
  enum class Kind { Gaze, Config, Bye, Closed, Fatal };
  Kind kind = Kind::Gaze;
  session::GazeEvent gaze;
  json config;
  std::string code;
  std::string detail;

  static Item control(Kind k) {
    Item i;
    i.kind = k;
    return i;
  }
  static Item fatal(std::string code, std::string detail) {
    Item i = control(Kind::Fatal);
    i.code = std::move(code);
    i.detail = std::move(detail);
    return i;
  }
};

// Ordered ingestion queue. Beyond kQueueCapacity gaze events the oldest
// gaze is dropped; control items are never dropped.
class Inbox {
 public:
  void push(Item item) {
    {
      std::lock_guard lock(mu_);
      if (item.kind == Item::Kind::Gaze) {
        if (gazes_ >= session::kQueueCapacity) {
          auto it = std::find_if(q_.begin(), q_.end(), [](const Item& i) { return i.kind == Item::Kind::Gaze; });
          q_.erase(it);
          --gazes_;
          ++dropped_;
        }
        ++gazes_;
      }
      q_.push_back(std::move(item));
    }
    cv_.notify_one();
  }

  std::optional<Item> pop_until(Clock::time_point deadline) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_until(lock, deadline, [&] { return !q_.empty(); })) return std::nullopt;
    Item item = std::move(q_.front());
    q_.pop_front();
    if (item.kind == Item::Kind::Gaze) --gazes_;
    return item;
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> q_;
  std::size_t gazes_ = 0;
  std::uint64_t dropped_ = 0;
};

// Single writer for outgoing messages, so a slow client never blocks the
// stepper. Frames beyond a backlog of 256 are dropped oldest first.
class Emitter {
 public:
  explicit Emitter(Channel& ch) : ch_(ch), thread_([this] { run(); }) {}
  ~Emitter() { finish(); }

  void post(json msg) {
    {
      std::lock_guard lock(mu_);
      if (msg.value("type", "") == "frame" && frames_ >= 256) {
        auto it = std::find_if(q_.begin(), q_.end(), [](const json& m) { return m.value("type", "") == "frame"; });
        q_.erase(it);
        --frames_;
        ++dropped_frames_;
      }
      if (msg.value("type", "") == "frame") ++frames_;
      q_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  // Sends everything queued, then returns.
  void finish() {
    {
      std::lock_guard lock(mu_);
      if (done_) return;
      done_ = true;
    }
    cv_.notify_one();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void run() {
    for (;;) {
      json msg;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return done_ || !q_.empty(); });
        if (q_.empty()) return;
        msg = std::move(q_.front());
        q_.pop_front();
        if (msg.value("type", "") == "frame") --frames_;
      }
      if (!broken_ && !ch_.write_line(msg.dump())) broken_ = true;
    }
  }

  Channel& ch_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<json> q_;
  std::size_t frames_ = 0;
  std::uint64_t dropped_frames_ = 0;
  bool done_ = false;
  bool broken_ = false;
  std::thread thread_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Server

struct Server::Impl {
  session::SessionConfig config;
  ServeOptions options;
  int listen_fd = -1;
  std::atomic<bool> stopping{false};
  std::atomic<int> finished{0};
  std::atomic<int> next_id{0};
  mutable std::mutex mu;
  std::vector<std::string> records;
  std::vector<std::thread> sessions;
  std::vector<int> open_fds;

  void handle(int fd);
  void run_session(Channel& ch, int fd, int id);
  std::string flush(const session::RunRecord& r, int id);
};

Server::Server(session::SessionConfig config, ServeOptions options) : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = std::move(config);
  impl_->options = std::move(options);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw BindError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(impl_->options.port));
  if (::inet_pton(AF_INET, impl_->options.bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw BindError("invalid bind address " + impl_->options.bind_address);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw BindError("cannot bind " + impl_->options.bind_address + ":" + std::to_string(impl_->options.port) + ": " +
                    why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  impl_->listen_fd = fd;
  if (!impl_->options.record_dir.empty()) std::filesystem::create_directories(impl_->options.record_dir);
}

Server::~Server() {
  stop();
  for (auto& t : impl_->sessions)
    if (t.joinable()) t.join();
  if (impl_->listen_fd >= 0) ::close(impl_->listen_fd);
}

void Server::stop() {
  impl_->stopping = true;
  std::lock_guard lock(impl_->mu);
  for (int fd : impl_->open_fds) ::shutdown(fd, SHUT_RDWR);
}

std::vector<std::string> Server::records() const {
  std::lock_guard lock(impl_->mu);
  return impl_->records;
}

void Server::run() {
  spdlog::info("serving on {}:{}", impl_->options.bind_address, port_);
  while (!impl_->stopping) {
    if (impl_->options.max_sessions > 0 && impl_->finished >= impl_->options.max_sessions) break;
    pollfd p{impl_->listen_fd, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r <= 0) continue;
    const int fd = ::accept(impl_->listen_fd, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(impl_->mu);
    impl_->open_fds.push_back(fd);
    impl_->sessions.emplace_back([this, fd] { impl_->handle(fd); });
  }
  for (auto& t : impl_->sessions)
    if (t.joinable()) t.join();
  impl_->sessions.clear();
}

void Server::Impl::handle(int fd) {
  const int id = next_id++;
  try {
    // A WebSocket client speaks first with "GET"; a raw client may stay
    // silent, so wait only briefly before assuming raw ND-JSON.
    Channel probe(fd, false, false);
    bool ws = false;
    if (probe.reader().fill(3, 300) && probe.reader().buffered().compare(0, 3, "GET") == 0) ws = true;
    if (ws) {
      Channel wsch(fd, true, false);
      wsch.reader() = probe.reader();
      if (accept_websocket(wsch, fd)) run_session(wsch, fd, id);
    } else {
      Channel raw(fd, false, false);
      raw.reader() = probe.reader();
      run_session(raw, fd, id);
    }
  } catch (const std::exception& e) {
    spdlog::error("session {}: {}", id, e.what());
  }
  {
    std::lock_guard lock(mu);
    open_fds.erase(std::remove(open_fds.begin(), open_fds.end(), fd), open_fds.end());
  }
  ::close(fd);
  ++finished;
}

std::string Server::Impl::flush(const session::RunRecord& r, int id) {
  if (options.record_dir.empty()) return {};
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  const std::string path =
      (std::filesystem::path(options.record_dir) / ("session-" + std::to_string(ms) + "-" + std::to_string(id) + ".ndjson"))
          .string();
  session::write_run_file(r, path);
  std::lock_guard lock(mu);
  records.push_back(path);
  return path;
}

void Server::Impl::run_session(Channel& ch, int fd, int id) {
  Inbox inbox;
  Emitter out(ch);
  session::SessionConfig cfg = config;

  out.post({{"type", "hello"},
            {"version", session::kRunFormatVersion},
            {"clock", cfg.clock == session::Clock::Lockstep ? "lockstep" : "realtime"},
            {"dt", cfg.dt},
            {"frame_every", cfg.frame_every},
            {"observers", cfg.observers.size()}});

  // Reader: parses and validates at ingestion, then queues.
  std::thread reader([&] {
    std::vector<double> last_t;
    bool any_gaze = false;
    for (;;) {
      auto line = ch.read_line();
      if (!line) {
        inbox.push(Item::control(Item::Kind::Closed));
        return;
      }
      if (line->find_first_not_of(" \t\r") == std::string::npos) continue;
      json msg;
      try {
        msg = json::parse(*line);
      } catch (const json::parse_error& e) {
        inbox.push(Item::fatal("bad_json", e.what()));
        return;
      }
      const std::string type = msg.is_object() ? msg.value("type", "") : "";
      if (type == "gaze") {
        Item item;
        try {
          item.gaze = session::parse_gaze(msg);
        } catch (const DomainError& e) {
          inbox.push(Item::fatal("gaze_domain", e.what()));
          return;
        } catch (const ParseError& e) {
          inbox.push(Item::fatal("bad_message", e.what()));
          return;
        }
        const auto o = static_cast<std::size_t>(item.gaze.observer);
        if (last_t.size() <= o) last_t.resize(o + 1, -std::numeric_limits<double>::infinity());
        if (!(item.gaze.t > last_t[o])) {
          inbox.push(Item::fatal("event_order",
                      "gaze time " + std::to_string(item.gaze.t) + " does not increase"));
          return;
        }
        last_t[o] = item.gaze.t;
        any_gaze = true;
        inbox.push(std::move(item));
      } else if (type == "config") {
        if (any_gaze) {
          inbox.push(Item::fatal("config_late", "config must precede the first gaze"));
          return;
        }
        Item item = Item::control(Item::Kind::Config);
        item.config = msg.value("config", json::object());
        inbox.push(std::move(item));
      } else if (type == "bye") {
        inbox.push(Item::control(Item::Kind::Bye));
        return;
      } else if (type == "hello") {
        continue;
      } else {
        inbox.push(Item::fatal("unknown_type", "unknown message type \"" + type + "\""));
        return;
      }
    }
  });

  auto engine = std::make_unique<session::Engine>(cfg);
  auto recorder = std::make_unique<session::Recorder>(*engine);
  bool pending = false;
  auto origin = Clock::now();

  auto emit_frames = [&](const std::vector<render::Frame>& frames, std::uint64_t step) {
    const std::string digest = session::to_hex(session::frame_digest(frames));
    for (std::size_t o = 0; o < frames.size(); ++o) {
      json m = render::encode_frame(frames[o]);
      m["step"] = step;
      m["digest"] = digest;
      if (frames.size() > 1) m["observer"] = o;
      out.post(std::move(m));
    }
  };
  auto start = [&] {
    engine = std::make_unique<session::Engine>(cfg);
    recorder = std::make_unique<session::Recorder>(*engine);
    pending = false;
    origin = Clock::now();
    emit_frames(engine->render_frames(), 0);
  };
  // One step, recorded and emitted at cadence; false on a blow-up.
  std::string error;
  auto advance = [&]() {
    try {
      engine->step();
    } catch (const StabilityError& e) {
      error = e.what();
      return false;
    }
    pending = false;
    if (engine->step_index() % static_cast<std::uint64_t>(cfg.frame_every) == 0) {
      const auto frames = engine->render_frames();
      recorder->stepped(*engine, &frames);
      emit_frames(frames, engine->step_index());
    } else {
      recorder->stepped(*engine, nullptr);
    }
    return true;
  };

  start();
  std::string status = "complete";
  std::optional<json> closing;  // last message before close
  bool bye = false;
  const bool lockstep = cfg.clock == session::Clock::Lockstep;

  for (bool running = true; running;) {
    auto deadline = Clock::now() + std::chrono::milliseconds(100);
    if (!lockstep) {
      const auto next = origin + std::chrono::duration_cast<Clock::duration>(
                                     std::chrono::duration<double>((engine->step_index() + 1) * cfg.dt));
      deadline = std::min(deadline, next);
    }
    auto item = inbox.pop_until(deadline);
    if (stopping) item = Item::control(Item::Kind::Closed);
    if (item) {
      switch (item->kind) {
        case Item::Kind::Gaze:
          if (lockstep)
            while (!engine->due(item->gaze.t))
              if (!advance()) {
                status = "aborted";
                closing = error_message("stability", error);
                running = false;
                break;
              }
          if (!running) break;
          try {
            engine->ingest(item->gaze);
          } catch (const DomainError& e) {
            closing = error_message("gaze_domain", e.what());
            running = false;
            break;
          } catch (const ParseError& e) {
            closing = error_message("event_order", e.what());
            running = false;
            break;
          }
          recorder->applied(item->gaze);
          pending = true;
          break;
        case Item::Kind::Config:
          try {
            cfg = session::config_from_json(item->config);
            out.post({{"type", "config"}, {"config", session::to_json(cfg)}});
            start();
          } catch (const Error& e) {
            closing = error_message("bad_config", e.what());
            running = false;
          }
          break;
        case Item::Kind::Bye:
          bye = true;
          [[fallthrough]];
        case Item::Kind::Closed:
          if (lockstep) {
            // finish like a scripted run: duration, plus one step for the
            // last applied event
            auto n = static_cast<std::uint64_t>(std::llround(cfg.duration / cfg.dt));
            if (pending) n = std::max(n, engine->step_index() + 1);
            while (engine->step_index() < n && status == "complete")
              if (!advance()) {
                status = "aborted";
                closing = error_message("stability", error);
              }
          }
          running = false;
          break;
        case Item::Kind::Fatal:
          closing = error_message(item->code, item->detail);
          running = false;
          break;
      }
      continue;
    }
    if (!lockstep) {
      // realtime: catch up with the wall clock, at most 50 steps at a time
      const double elapsed = std::chrono::duration<double>(Clock::now() - origin).count();
      const auto target = static_cast<std::uint64_t>(elapsed / cfg.dt);
      for (int k = 0; k < 50 && engine->step_index() < target; ++k)
        if (!advance()) {
          status = "aborted";
          closing = error_message("stability", error);
          running = false;
          break;
        }
    }
  }

  auto record = recorder->finish(*engine, status, closing ? closing->value("detail", "") : std::string());
  record.dropped = inbox.dropped();
  std::string path;
  try {
    path = flush(record, id);
  } catch (const std::exception& e) {
    spdlog::error("session {}: could not write run record: {}", id, e.what());
  }
  if (closing) {
    out.post(*closing);
  } else if (bye) {
    out.post({{"type", "bye"},
              {"steps", engine->step_index()},
              {"dropped", record.dropped},
              {"state_digest", session::to_hex(record.final_state_digest)},
              {"record", path}});
  }
  out.finish();
  ch.close_output();
  ::shutdown(fd, SHUT_RD);
  reader.join();
  spdlog::info("session {} ended after {} steps{}", id, engine->step_index(), path.empty() ? "" : ", record " + path);
}

// ---------------------------------------------------------------------------
// Client

struct Client::Impl {
  int fd = -1;
  std::unique_ptr<Channel> ch;
};

Client::Client(const std::string& host, int port, bool websocket) : impl_(std::make_unique<Impl>()) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw Error("cannot resolve " + host);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    if (fd >= 0) ::close(fd);
    throw Error("cannot connect to " + host + ":" + std::to_string(port));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  impl_->fd = fd;
  impl_->ch = std::make_unique<Channel>(fd, websocket, true);
  if (websocket) {
    unsigned char raw[16];
    RAND_bytes(raw, sizeof raw);
    const std::string key = render::base64_encode(std::vector<std::uint8_t>(raw, raw + sizeof raw));
    const std::string req = "GET / HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                            "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                            "\r\nSec-WebSocket-Version: 13\r\n\r\n";
    send_all(fd, req.data(), req.size());
    auto resp = impl_->ch->reader().until("\r\n\r\n", 5000, 65536);
    if (!resp || resp->find(" 101 ") == std::string::npos || resp->find(websocket_accept(key)) == std::string::npos)
      throw Error("WebSocket handshake failed");
  }
}

Client::~Client() { close(); }

void Client::send(const json& msg) {
  if (impl_->fd < 0 || !impl_->ch->write_line(msg.dump())) throw Error("send on a closed connection");
}

std::optional<json> Client::receive(int timeout_ms) {
  if (impl_->fd < 0) return std::nullopt;
  auto line = impl_->ch->read_line(timeout_ms);
  if (!line) return std::nullopt;
  try {
    return json::parse(*line);
  } catch (const json::parse_error&) {
    throw ParseError("malformed message from server");
  }
}

void Client::close() {
  if (impl_->fd < 0) return;
  ::shutdown(impl_->fd, SHUT_RDWR);
  ::close(impl_->fd);
  impl_->fd = -1;
}

}  // namespace droem::serve

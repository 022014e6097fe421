#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "droem/session.hpp"

// Network service for the viewer. One session per TCP connection, speaking
// newline-delimited JSON either raw or inside WebSocket text frames (chosen
// by whether the client opens with an HTTP "GET").
//
// Messages: hello and config (server greeting, optional client override
// before the first gaze), gaze (client), frame (server), error (server,
// followed by close) and bye (either side). A session ends on bye or
// disconnect and its run record is written to the record directory.

namespace droem::serve {

struct ServeOptions {
  /// 0 picks a free port; Server::port() reports it.
  int port = 0;
  std::string bind_address = "127.0.0.1";
  /// Where run records go; empty disables recording.
  std::string record_dir;
  /// Stop after this many sessions have ended; 0 means never.
  int max_sessions = 0;
};

class Server {
 public:
  /// BindError when the address is taken or cannot be bound.
  Server(session::SessionConfig config, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int port() const { return port_; }
  /// Accept loop; returns after stop() or max_sessions.
  void run();
  void stop();
  /// Paths of the run records written so far.
  std::vector<std::string> records() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// Sec-WebSocket-Accept for a client key: base64(SHA-1(key + GUID)).
std::string websocket_accept(const std::string& key);

/// Error message {"type":"error","code","detail"}.
nlohmann::json error_message(const std::string& code, const std::string& detail);

/// Minimal blocking client used by tests and tools: raw ND-JSON or
/// WebSocket framing over TCP to host:port.
class Client {
 public:
  Client(const std::string& host, int port, bool websocket = false);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send(const nlohmann::json& msg);
  /// Next message, or nullopt on close or after timeout_ms without data.
  std::optional<nlohmann::json> receive(int timeout_ms = 5000);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace droem::serve

#pragma once

#include <chrono>
#include <optional>
#include <string>

namespace twinadapt::net {

struct Address {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

// Accepts "host:port", "tcp://host:port" or ":port".
Address parse_address(const std::string& text);

// Line-oriented TCP stream (owning socket).
class LineStream {
 public:
  LineStream() = default;
  explicit LineStream(int fd) : fd_(fd) {}
  LineStream(LineStream&& other) noexcept;
  LineStream& operator=(LineStream&& other) noexcept;
  LineStream(const LineStream&) = delete;
  LineStream& operator=(const LineStream&) = delete;
  ~LineStream();

  // Throws Error(Unreachable) when the connection cannot be established in time.
  static LineStream connect(const Address& addr, std::chrono::milliseconds timeout);

  bool valid() const { return fd_ >= 0; }
  // Returns false if the peer closed or the write failed.
  bool write_line(const std::string& line);
  // nullopt on EOF. Throws Error(Timeout) when nothing arrives within the timeout.
  std::optional<std::string> read_line(std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  // Non-blocking probe for buffered or readable data.
  bool poll_readable(std::chrono::milliseconds timeout);
  void shutdown();
  void close();

 private:
  int fd_ = -1;
  std::string buffer_;
};

class Listener {
 public:
  Listener() = default;
  Listener(Listener&& other) noexcept;
  Listener& operator=(Listener&& other) noexcept;
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener();

  // Throws Error(ConfigError) if the address cannot be bound. Port 0 picks a free port.
  static Listener bind(const Address& addr);

  int port() const { return port_; }
  // nullopt on timeout or after close().
  std::optional<LineStream> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace twinadapt::net

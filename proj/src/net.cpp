#include "twinadapt/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "twinadapt/error.hpp"

namespace twinadapt::net {

Address parse_address(const std::string& text) {
  std::string s = text;
  if (s.rfind("tcp://", 0) == 0) s = s.substr(6);
  if (s.rfind("http://", 0) == 0) s = s.substr(7);
  auto colon = s.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::ConfigError, "address '" + text + "' must be host:port");
  Address a;
  if (colon > 0) a.host = s.substr(0, colon);
  if (a.host == "localhost") a.host = "127.0.0.1";
  try {
    a.port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError, "address '" + text + "' has an invalid port");
  }
  if (a.port < 0 || a.port > 65535) throw Error(ErrorKind::ConfigError, "address '" + text + "' has an invalid port");
  return a;
}

namespace {

bool resolve(const Address& addr, sockaddr_in& out) {
  std::memset(&out, 0, sizeof(out));
  out.sin_family = AF_INET;
  out.sin_port = htons(static_cast<uint16_t>(addr.port));
  if (inet_pton(AF_INET, addr.host.c_str(), &out.sin_addr) == 1) return true;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (getaddrinfo(addr.host.c_str(), nullptr, &hints, &res) != 0 || !res) return false;
  out.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return true;
}

}  // namespace

LineStream::LineStream(LineStream&& other) noexcept : fd_(other.fd_), buffer_(std::move(other.buffer_)) {
  other.fd_ = -1;
}

LineStream& LineStream::operator=(LineStream&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    buffer_ = std::move(other.buffer_);
    other.fd_ = -1;
  }
  return *this;
}

LineStream::~LineStream() { close(); }

LineStream LineStream::connect(const Address& addr, std::chrono::milliseconds timeout) {
  sockaddr_in sa;
  if (!resolve(addr, sa)) throw Error(ErrorKind::Unreachable, "cannot resolve " + addr.str());
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorKind::Unreachable, std::string("socket: ") + std::strerror(errno));
  LineStream stream(fd);
  const int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa));
  if (rc < 0 && errno != EINPROGRESS) {
    throw Error(ErrorKind::Unreachable, addr.str() + ": " + std::strerror(errno));
  }
  if (rc < 0) {
    pollfd p{fd, POLLOUT, 0};
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw Error(ErrorKind::Unreachable, addr.str() + ": connect timed out");
    int err = 0;
    socklen_t len = sizeof(err);
    getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (rc < 0 || err != 0) throw Error(ErrorKind::Unreachable, addr.str() + ": " + std::strerror(err ? err : errno));
  }
  fcntl(fd, F_SETFL, flags);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return stream;
}

bool LineStream::write_line(const std::string& line) {
  if (fd_ < 0) return false;
  std::string data = line;
  data.push_back('\n');
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

bool LineStream::poll_readable(std::chrono::milliseconds timeout) {
  if (buffer_.find('\n') != std::string::npos) return true;
  if (fd_ < 0) return false;
  pollfd p{fd_, POLLIN, 0};
  return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
}

std::optional<std::string> LineStream::read_line(std::optional<std::chrono::milliseconds> timeout) {
  const auto deadline = timeout ? std::chrono::steady_clock::now() + *timeout : std::chrono::steady_clock::time_point::max();
  while (true) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (fd_ < 0) return std::nullopt;
    if (timeout) {
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) throw Error(ErrorKind::Timeout, "no response line within timeout");
      pollfd p{fd_, POLLIN, 0};
      int rc = ::poll(&p, 1, static_cast<int>(remaining.count()));
      if (rc == 0) throw Error(ErrorKind::Timeout, "no response line within timeout");
      if (rc < 0 && errno != EINTR) return std::nullopt;
    }
    char chunk[4096];
    ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      if (buffer_.empty()) return std::nullopt;
      std::string rest = std::move(buffer_);  // unterminated final line
      buffer_.clear();
      return rest;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void LineStream::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void LineStream::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener::Listener(Listener&& other) noexcept : fd_(other.fd_), port_(other.port_) { other.fd_ = -1; }

Listener& Listener::operator=(Listener&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    port_ = other.port_;
    other.fd_ = -1;
  }
  return *this;
}

Listener::~Listener() { close(); }

Listener Listener::bind(const Address& addr) {
  sockaddr_in sa;
  if (!resolve(addr, sa)) throw Error(ErrorKind::ConfigError, "cannot resolve " + addr.str());
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorKind::ConfigError, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0 || ::listen(fd, 16) < 0) {
    const std::string reason = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorKind::ConfigError, "cannot listen on " + addr.str() + ": " + reason);
  }
  socklen_t len = sizeof(sa);
  getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
  Listener l;
  l.fd_ = fd;
  l.port_ = ntohs(sa.sin_port);
  return l;
}

std::optional<LineStream> Listener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0) return std::nullopt;
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return std::nullopt;
  int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) return std::nullopt;
  int one = 1;
  setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return LineStream(client);
}

void Listener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace twinadapt::net

#include "fmi/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <csignal>
#include <cstring>

namespace fmi {

namespace {

sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(ep.port);
  std::memcpy(&sa.sin_addr.s_addr, ep.addr.data(), 4);
  return sa;
}

Endpoint from_sockaddr(const sockaddr_in& sa) {
  Endpoint ep;
  std::memcpy(ep.addr.data(), &sa.sin_addr.s_addr, 4);
  ep.port = ntohs(sa.sin_port);
  return ep;
}

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
  throw FmiError(kind, what + ": " + std::strerror(errno));
}

int remaining_ms(Deadline deadline) {
  if (!deadline) return -1;
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

}  // namespace

std::string to_string(const Endpoint& ep) {
  return std::to_string(ep.addr[0]) + "." + std::to_string(ep.addr[1]) + "." + std::to_string(ep.addr[2]) + "." +
         std::to_string(ep.addr[3]) + ":" + std::to_string(ep.port);
}

Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    throw FmiError(ErrorKind::ProtocolViolation, "endpoint without port: " + std::string(text));
  }
  Endpoint ep;
  std::string host(text.substr(0, colon));
  if (host == "localhost") host = "127.0.0.1";
  in_addr a{};
  if (inet_pton(AF_INET, host.c_str(), &a) != 1) {
    throw FmiError(ErrorKind::ProtocolViolation, "not an IPv4 address: " + host);
  }
  std::memcpy(ep.addr.data(), &a.s_addr, 4);
  const auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || p != port_text.data() + port_text.size() || port > 65535) {
    throw FmiError(ErrorKind::ProtocolViolation, "bad port: " + std::string(port_text));
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

void Socket::reset(int fd) noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Endpoint Socket::local_endpoint() const {
  sockaddr_in sa{};
  socklen_t len = sizeof sa;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0) fail(ErrorKind::ChannelFailure, "getsockname");
  return from_sockaddr(sa);
}

Endpoint Socket::peer_endpoint() const {
  sockaddr_in sa{};
  socklen_t len = sizeof sa;
  if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0) fail(ErrorKind::ChannelFailure, "getpeername");
  return from_sockaddr(sa);
}

void Socket::set_nodelay(bool on) {
  int v = on ? 1 : 0;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &v, sizeof v);
}

void Socket::set_nonblocking(bool on) {
  int flags = ::fcntl(fd_, F_GETFL, 0);
  flags = on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK);
  ::fcntl(fd_, F_SETFL, flags);
}

Socket bind_reusable(const Endpoint& local) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) fail(ErrorKind::ChannelFailure, "socket");
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEPORT, &one, sizeof one);
  auto sa = to_sockaddr(local);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
    fail(ErrorKind::ChannelFailure, "bind " + to_string(local));
  }
  return s;
}

Socket tcp_listen(const Endpoint& local, int backlog, bool reuse_port) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) fail(ErrorKind::ChannelFailure, "socket");
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (reuse_port) ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEPORT, &one, sizeof one);
  auto sa = to_sockaddr(local);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
    fail(ErrorKind::ChannelFailure, "bind " + to_string(local));
  }
  if (::listen(s.fd(), backlog) != 0) fail(ErrorKind::ChannelFailure, "listen");
  return s;
}

Socket tcp_connect(const Endpoint& remote, Deadline deadline) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) fail(ErrorKind::ChannelFailure, "socket");
  connect_socket(s, remote, deadline);
  return s;
}

void connect_socket(Socket& s, const Endpoint& remote, Deadline deadline) {
  s.set_nonblocking(true);
  auto sa = to_sockaddr(remote);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
    if (errno != EINPROGRESS) fail(ErrorKind::ChannelFailure, "connect " + to_string(remote));
    pollfd p{s.fd(), POLLOUT, 0};
    int rc;
    do {
      rc = ::poll(&p, 1, remaining_ms(deadline));
    } while (rc < 0 && errno == EINTR);
    if (rc == 0) throw FmiError(ErrorKind::Timeout, "connect " + to_string(remote));
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      fail(ErrorKind::ChannelFailure, "connect " + to_string(remote));
    }
  }
  s.set_nonblocking(false);
}

bool wait_readable(int fd, Deadline deadline) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) fail(ErrorKind::ChannelFailure, "poll");
  }
}

void write_all(const Socket& s, std::span<const std::byte> data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(s.fd(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::ChannelFailure, "send");
    }
    off += static_cast<std::size_t>(n);
  }
}

void read_exact(const Socket& s, std::span<std::byte> data, Deadline deadline) {
  std::size_t off = 0;
  while (off < data.size()) {
    if (deadline && !wait_readable(s.fd(), deadline)) throw FmiError(ErrorKind::Timeout, "receive timed out");
    ssize_t n = ::recv(s.fd(), data.data() + off, data.size() - off, 0);
    if (n == 0) throw FmiError(ErrorKind::ChannelFailure, "connection closed by peer");
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::ChannelFailure, "recv");
    }
    off += static_cast<std::size_t>(n);
  }
}

void ignore_sigpipe() { std::signal(SIGPIPE, SIG_IGN); }

}  // namespace fmi

// Thin RAII layer over POSIX TCP sockets. IPv4 only.
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "fmi/core.hpp"

namespace fmi {

using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

inline Deadline deadline_after(std::chrono::milliseconds d) { return Clock::now() + d; }

struct Endpoint {
  std::array<std::uint8_t, 4> addr{127, 0, 0, 1};
  std::uint16_t port = 0;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

std::string to_string(const Endpoint& ep);
/// Parses "a.b.c.d:port". Throws ProtocolViolation on malformed input.
Endpoint parse_endpoint(std::string_view text);

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  explicit operator bool() const noexcept { return valid(); }
  int release() noexcept {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset(int fd = -1) noexcept;
  /// shutdown(SHUT_RDWR) without closing; wakes threads blocked on the fd.
  void shutdown() noexcept;

  Endpoint local_endpoint() const;
  Endpoint peer_endpoint() const;

  void set_nodelay(bool on);
  void set_nonblocking(bool on);

 private:
  int fd_ = -1;
};

/// Creates an unconnected TCP socket with SO_REUSEADDR and SO_REUSEPORT set,
/// bound to `local` (port 0 picks an ephemeral port).
Socket bind_reusable(const Endpoint& local);

Socket tcp_listen(const Endpoint& local, int backlog = 1024, bool reuse_port = false);

/// Blocking connect with deadline. ChannelFailure on refusal or error,
/// Timeout when the deadline passes.
Socket tcp_connect(const Endpoint& remote, Deadline deadline = std::nullopt);

/// Connects an existing (possibly pre-bound) socket. Same errors as
/// tcp_connect.
void connect_socket(Socket& s, const Endpoint& remote, Deadline deadline = std::nullopt);

/// Waits until `fd` is readable or the deadline passes. Returns false on timeout.
bool wait_readable(int fd, Deadline deadline);

void write_all(const Socket& s, std::span<const std::byte> data);
/// Reads exactly data.size() bytes. ChannelFailure on EOF or error, Timeout
/// on deadline.
void read_exact(const Socket& s, std::span<std::byte> data, Deadline deadline = std::nullopt);

/// Ignores SIGPIPE for the whole process; sends also use MSG_NOSIGNAL.
void ignore_sigpipe();

}  // namespace fmi

#include "fmi/rendezvous.hpp"

#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <vector>

#include "fmi/wire.hpp"

namespace fmi::rendezvous {

namespace {

bool valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong encodings, surrogates, out of range
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

}  // namespace

bool valid_pairing_name(std::string_view name) noexcept {
  return !name.empty() && name.size() <= 255 && valid_utf8(name);
}

std::string pairing_name(std::string_view comm, int rank_a, int rank_b, std::uint64_t epoch) {
  return std::string(comm) + ":" + std::to_string(std::min(rank_a, rank_b)) + "-" +
         std::to_string(std::max(rank_a, rank_b)) + ":" + std::to_string(epoch);
}

StepResult coordinator_step(CoordinatorState state, PairingTicket request) {
  if (!valid_pairing_name(request.name)) {
    throw FmiError(ErrorKind::ProtocolViolation, "malformed pairing name");
  }
  auto it = state.pending.find(request.name);
  if (it == state.pending.end()) {
    auto name = request.name;
    state.pending.emplace(std::move(name), std::move(request));
    return {std::move(state), Hold{}};
  }
  Exchange ex{std::move(it->second), std::move(request)};
  state.pending.erase(it);
  ++state.stats.completed;
  return {std::move(state), std::move(ex)};
}

Bytes encode_request(std::string_view name) {
  if (!valid_pairing_name(name)) throw FmiError(ErrorKind::ProtocolViolation, "malformed pairing name");
  wire::Writer w;
  w.u8(static_cast<std::uint8_t>(name.size()));
  w.raw(name);
  return std::move(w).take();
}

std::string decode_request(std::span<const std::byte> frame) {
  wire::Reader r(frame);
  const auto len = r.u8();
  auto name = wire::to_string(r.raw(len));
  if (r.remaining() != 0) throw FmiError(ErrorKind::ProtocolViolation, "trailing bytes in pairing request");
  if (!valid_pairing_name(name)) throw FmiError(ErrorKind::ProtocolViolation, "malformed pairing name");
  return name;
}

Bytes encode_response(const Response& resp) {
  wire::Writer w;
  w.u8(static_cast<std::uint8_t>(resp.status));
  if (resp.status == Status::ok) {
    for (auto octet : resp.peer.addr) w.u8(octet);
    w.u16(resp.peer.port);
  }
  return std::move(w).take();
}

Response decode_response(std::span<const std::byte> frame) {
  wire::Reader r(frame);
  Response resp;
  const auto status = r.u8();
  if (status > 2) throw FmiError(ErrorKind::ProtocolViolation, "unknown rendezvous status");
  resp.status = static_cast<Status>(status);
  if (resp.status == Status::ok) {
    for (auto& octet : resp.peer.addr) octet = r.u8();
    resp.peer.port = r.u16();
  }
  return resp;
}

// ---------------------------------------------------------------------------
// Coordinator

Coordinator::Coordinator(Options opts) : opts_(opts), listener_(tcp_listen(opts.bind, 4096)) {
  listener_.set_nonblocking(true);
  endpoint_ = listener_.local_endpoint();
  wake_fd_ = ::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK);
}

Coordinator::~Coordinator() {
  if (wake_fd_ >= 0) ::close(wake_fd_);
}

void Coordinator::stop() {
  stopping_ = true;
  std::uint64_t one = 1;
  [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof one);
}

CoordinatorStats Coordinator::stats() const {
  std::lock_guard lock(mu_);
  return state_.stats;
}

std::size_t Coordinator::pending() const {
  std::lock_guard lock(mu_);
  return state_.pending.size();
}

namespace {

struct Conn {
  Socket sock;
  Bytes buf;
  std::size_t need = 1;
  bool parked = false;
  std::string name;
  Clock::time_point opened;
};

void send_quietly(const Socket& s, const Response& r) {
  auto bytes = encode_response(r);
  ::send(s.fd(), bytes.data(), bytes.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
}

}  // namespace

void Coordinator::run() {
  std::map<int, Conn> conns;
  std::map<std::string, int, std::less<>> parked;  // pairing name -> fd

  auto close_conn = [&](int fd) {
    auto it = conns.find(fd);
    if (it == conns.end()) return;
    if (it->second.parked) parked.erase(it->second.name);
    conns.erase(it);
  };

  std::vector<pollfd> fds;
  while (!stopping_) {
    fds.clear();
    fds.push_back({wake_fd_, POLLIN, 0});
    fds.push_back({listener_.fd(), POLLIN, 0});
    for (auto& [fd, c] : conns) fds.push_back({fd, POLLIN, 0});

    int rc = ::poll(fds.data(), fds.size(), 50);
    if (rc < 0 && errno != EINTR) break;
    if (stopping_) break;

    if (fds[1].revents & POLLIN) {
      for (;;) {
        int cfd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC | SOCK_NONBLOCK);
        if (cfd < 0) break;
        Conn c;
        c.sock = Socket(cfd);
        c.opened = Clock::now();
        conns.emplace(cfd, std::move(c));
      }
    }

    for (std::size_t i = 2; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const int fd = fds[i].fd;
      auto it = conns.find(fd);
      if (it == conns.end()) continue;  // already closed by an exchange in this pass
      Conn& c = it->second;

      if (c.parked) {
        // A parked client must stay silent; any byte or EOF abandons the ticket.
        std::lock_guard lock(mu_);
        state_.pending.erase(c.name);
        ++state_.stats.abandoned;
        close_conn(fd);
        continue;
      }

      std::byte chunk[256];
      const auto want = std::min(sizeof chunk, c.need - c.buf.size());
      ssize_t n = ::recv(fd, chunk, want, 0);
      if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
        close_conn(fd);
        continue;
      }
      if (n < 0) continue;
      c.buf.insert(c.buf.end(), chunk, chunk + n);
      if (c.buf.size() == 1 && c.need == 1) {
        c.need = 1 + static_cast<std::size_t>(c.buf[0]);
        if (c.need == 1) {
          send_quietly(c.sock, {Status::malformed, {}});
          std::lock_guard lock(mu_);
          ++state_.stats.malformed;
          close_conn(fd);
          continue;
        }
      }
      if (c.buf.size() < c.need) continue;

      PairingTicket ticket;
      try {
        ticket.name = decode_request(c.buf);
        ticket.observed = c.sock.peer_endpoint();
      } catch (const FmiError&) {
        send_quietly(c.sock, {Status::malformed, {}});
        std::lock_guard lock(mu_);
        ++state_.stats.malformed;
        close_conn(fd);
        continue;
      }
      ticket.arrival = Clock::now();

      std::lock_guard lock(mu_);
      auto step = coordinator_step(std::move(state_), std::move(ticket));
      state_ = std::move(step.state);
      if (std::holds_alternative<Hold>(step.action)) {
        c.parked = true;
        c.name = decode_request(c.buf);
        parked[c.name] = fd;
      } else {
        auto& ex = std::get<Exchange>(step.action);
        auto pit = parked.find(ex.first.name);
        if (pit != parked.end()) {
          const int other = pit->second;
          send_quietly(conns.at(other).sock, {Status::ok, ex.second.observed});
          send_quietly(c.sock, {Status::ok, ex.first.observed});
          close_conn(other);
        }
        close_conn(fd);
      }
    }

    // Evict tickets parked too long and drop clients that never finish a request.
    const auto now = Clock::now();
    std::vector<int> expired;
    for (auto& [fd, c] : conns) {
      if (now - c.opened >= opts_.hold_timeout) expired.push_back(fd);
    }
    for (int fd : expired) {
      Conn& c = conns.at(fd);
      if (c.parked) {
        send_quietly(c.sock, {Status::timeout, {}});
        std::lock_guard lock(mu_);
        state_.pending.erase(c.name);
        ++state_.stats.timeouts;
      }
      close_conn(fd);
    }
  }
}

BackgroundCoordinator::BackgroundCoordinator(Coordinator::Options opts)
    : coord_(opts), thread_([this] { coord_.run(); }) {}

BackgroundCoordinator::~BackgroundCoordinator() {
  coord_.stop();
  if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------
// Client

Endpoint pair_from(Socket& bound, const Endpoint& coordinator, std::string_view name,
                   std::chrono::milliseconds timeout) {
  const auto request = encode_request(name);
  const auto deadline = deadline_after(timeout);
  try {
    connect_socket(bound, coordinator, deadline);
  } catch (const FmiError& e) {
    throw FmiError(e.kind() == ErrorKind::Timeout ? ErrorKind::Timeout : ErrorKind::ChannelFailure,
                   "rendezvous at " + to_string(coordinator) + " unreachable: " + e.detail());
  }
  write_all(bound, request);

  std::byte status_byte[1];
  try {
    read_exact(bound, status_byte, deadline);
  } catch (const FmiError& e) {
    if (e.kind() == ErrorKind::Timeout) {
      throw FmiError(ErrorKind::Timeout, "no counterpart for '" + std::string(name) + "'");
    }
    throw FmiError(ErrorKind::ChannelFailure, "rendezvous disconnected: " + e.detail());
  }
  const auto status = static_cast<std::uint8_t>(status_byte[0]);
  if (status == static_cast<std::uint8_t>(Status::timeout)) {
    throw FmiError(ErrorKind::Timeout, "rendezvous hold timeout for '" + std::string(name) + "'");
  }
  if (status == static_cast<std::uint8_t>(Status::malformed)) {
    throw FmiError(ErrorKind::ProtocolViolation, "rendezvous rejected name '" + std::string(name) + "'");
  }
  if (status != 0) throw FmiError(ErrorKind::ProtocolViolation, "unknown rendezvous status");
  std::byte rest[6];
  try {
    read_exact(bound, rest, deadline);
  } catch (const FmiError& e) {
    throw FmiError(ErrorKind::ChannelFailure, "rendezvous disconnected: " + e.detail());
  }
  Bytes frame{status_byte[0]};
  frame.insert(frame.end(), std::begin(rest), std::end(rest));
  return decode_response(frame).peer;
}

PairResult pair(const Endpoint& coordinator, std::string_view name, std::chrono::milliseconds timeout) {
  Socket s = bind_reusable(Endpoint{{0, 0, 0, 0}, 0});
  auto peer = pair_from(s, coordinator, name, timeout);
  return {peer, s.local_endpoint()};
}

}  // namespace fmi::rendezvous

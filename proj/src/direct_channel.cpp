#include "fmi/direct_channel.hpp"

#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/uio.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "fmi/rendezvous.hpp"
#include "fmi/wire.hpp"

namespace fmi::direct {

namespace {

constexpr std::byte kMagic0{0x46};
constexpr std::byte kMagic1{0x4D};

void write_frame(const Socket& s, std::span<const std::byte> header, std::span<const std::byte> payload) {
  iovec iov[2];
  iov[0] = {const_cast<std::byte*>(header.data()), header.size()};
  iov[1] = {const_cast<std::byte*>(payload.data()), payload.size()};
  int first = 0;
  const int count = payload.empty() ? 1 : 2;
  while (first < count) {
    msghdr msg{};
    msg.msg_iov = iov + first;
    msg.msg_iovlen = static_cast<std::size_t>(count - first);
    ssize_t n = ::sendmsg(s.fd(), &msg, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw FmiError(ErrorKind::ChannelFailure, std::string("send: ") + std::strerror(errno));
    }
    auto left = static_cast<std::size_t>(n);
    while (first < count && left >= iov[first].iov_len) {
      left -= iov[first].iov_len;
      ++first;
    }
    if (first < count) {
      iov[first].iov_base = static_cast<char*>(iov[first].iov_base) + left;
      iov[first].iov_len -= left;
    }
  }
}

}  // namespace

std::array<std::byte, kFrameHeaderSize> encode_header(const FrameHeader& h) {
  wire::Writer w;
  w.u8(0x46);
  w.u8(0x4D);
  w.u32(h.seq);
  w.u16(h.tag);
  w.u64(h.payload_len);
  std::array<std::byte, kFrameHeaderSize> out{};
  std::copy(w.bytes().begin(), w.bytes().end(), out.begin());
  return out;
}

FrameHeader decode_header(std::span<const std::byte, kFrameHeaderSize> raw) {
  if (raw[0] != kMagic0 || raw[1] != kMagic1) throw FmiError(ErrorKind::ProtocolViolation, "bad frame magic");
  wire::Reader r(std::span<const std::byte>(raw).subspan(2));
  FrameHeader h;
  h.seq = r.u32();
  h.tag = r.u16();
  h.payload_len = r.u64();
  return h;
}

Bytes encode_frame(const Frame& f) {
  auto header = encode_header({f.seq, f.tag, f.payload.size()});
  Bytes out(kFrameHeaderSize + f.payload.size());
  std::copy(header.begin(), header.end(), out.begin());
  std::copy(f.payload.begin(), f.payload.end(), out.begin() + kFrameHeaderSize);
  return out;
}

Frame decode_frame(std::span<const std::byte> raw) {
  if (raw.size() < kFrameHeaderSize) throw FmiError(ErrorKind::ProtocolViolation, "truncated frame header");
  auto h = decode_header(raw.first<kFrameHeaderSize>());
  if (h.payload_len != raw.size() - kFrameHeaderSize) {
    throw FmiError(ErrorKind::ProtocolViolation, "frame length field does not match payload");
  }
  auto body = raw.subspan(kFrameHeaderSize);
  return Frame{h.seq, h.tag, Bytes(body.begin(), body.end())};
}

PeerConnection::PeerConnection(Socket sock, int local_rank, int remote_rank)
    : sock_(std::move(sock)), local_rank_(local_rank), remote_rank_(remote_rank) {
  if (local_rank == remote_rank) {
    throw FmiError(ErrorKind::ProtocolViolation, "connection to self (rank " + std::to_string(local_rank) + ")");
  }
}

void PeerConnection::send(std::uint16_t tag, std::span<const std::byte> payload) {
  if (!sock_) throw FmiError(ErrorKind::ChannelFailure, "send on closed connection");
  const auto header = encode_header({next_send_seq_, tag, payload.size()});
  write_frame(sock_, header, payload);
  ++next_send_seq_;
}

Bytes PeerConnection::recv(std::uint16_t expected_tag, Deadline deadline) {
  auto queued = std::find_if(queued_.begin(), queued_.end(), [&](const auto& q) { return q.first == expected_tag; });
  if (queued != queued_.end()) {
    Bytes out = std::move(queued->second);
    queued_.erase(queued);
    return out;
  }
  if (!sock_) throw FmiError(ErrorKind::ChannelFailure, "recv on closed connection");
  for (;;) {
    std::array<std::byte, kFrameHeaderSize> raw;
    read_exact(sock_, raw, deadline);
    const auto h = decode_header(raw);
    if (h.seq != next_recv_seq_) {
      throw FmiError(ErrorKind::ProtocolViolation, "frame sequence " + std::to_string(h.seq) + ", expected " +
                                                       std::to_string(next_recv_seq_));
    }
    ++next_recv_seq_;
    Bytes payload(h.payload_len);
    read_exact(sock_, payload, deadline);
    if (h.tag == expected_tag) return payload;
    queued_.emplace_back(h.tag, std::move(payload));
  }
}

namespace {

Bytes hello_payload(int rank) {
  wire::Writer w;
  w.u32(static_cast<std::uint32_t>(rank));
  return std::move(w).take();
}

std::optional<Socket> try_accept(const Socket& listener, const Endpoint& expected) {
  for (;;) {
    int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    Socket s(fd);
    // Anything other than the paired peer is a stray; drop it and keep waiting.
    if (s.peer_endpoint() == expected) return s;
  }
}

}  // namespace

PeerConnection connect_pair(const Endpoint& coordinator, std::string_view comm_name, std::uint64_t epoch,
                            int self_rank, int peer_rank, std::chrono::milliseconds timeout, PunchOptions punch) {
  if (self_rank == peer_rank) throw FmiError(ErrorKind::ProtocolViolation, "connect_pair with self");
  const auto deadline = Clock::now() + timeout;
  const Endpoint any{{0, 0, 0, 0}, 0};

  Socket rendezvous_sock = bind_reusable(any);
  const auto local_port = rendezvous_sock.local_endpoint().port;
  const auto name = rendezvous::pairing_name(comm_name, self_rank, peer_rank, epoch);
  const Endpoint peer_ep = rendezvous::pair_from(rendezvous_sock, coordinator, name, timeout);

  Socket listener = bind_reusable(Endpoint{{0, 0, 0, 0}, local_port});
  if (::listen(listener.fd(), 8) != 0) {
    throw FmiError(ErrorKind::ChannelFailure, std::string("listen for punch: ") + std::strerror(errno));
  }
  listener.set_nonblocking(true);

  std::optional<Socket> initiated;
  std::optional<Socket> accepted;
  for (int attempt = 0; attempt < punch.attempts && Clock::now() < deadline; ++attempt) {
    const auto round_end = std::min(deadline, Clock::now() + punch.interval);
    if (!accepted) accepted = try_accept(listener, peer_ep);
    if (!initiated && !accepted) {
      Socket s = bind_reusable(Endpoint{{0, 0, 0, 0}, local_port});
      try {
        connect_socket(s, peer_ep, round_end);
        initiated = std::move(s);
      } catch (const FmiError&) {
        // refused or 4-tuple already taken by an accepted connection
      }
    }
    if (!accepted) accepted = try_accept(listener, peer_ep);
    if (initiated || accepted) break;
    if (wait_readable(listener.fd(), round_end)) accepted = try_accept(listener, peer_ep);
    if (accepted) break;
  }
  rendezvous_sock.reset();
  listener.reset();

  Socket chosen;
  if (initiated && accepted) {
    chosen = self_rank < peer_rank ? std::move(*initiated) : std::move(*accepted);
  } else if (initiated) {
    chosen = std::move(*initiated);
  } else if (accepted) {
    chosen = std::move(*accepted);
  } else {
    throw FmiError(ErrorKind::Timeout, "hole punch to rank " + std::to_string(peer_rank) + " at " +
                                           to_string(peer_ep) + " did not complete");
  }
  chosen.set_nonblocking(false);
  chosen.set_nodelay(true);

  PeerConnection conn(std::move(chosen), self_rank, peer_rank);
  conn.send(kHelloTag, hello_payload(self_rank));
  const auto hello = conn.recv(kHelloTag, deadline);
  if (hello.size() != 4 || wire::load_le(hello) != static_cast<std::uint64_t>(peer_rank)) {
    throw FmiError(ErrorKind::ProtocolViolation, "hello from unexpected rank");
  }
  return conn;
}

}  // namespace fmi::direct

// Peer-to-peer TCP channel established by hole punching through the
// rendezvous coordinator.
//
// Frame layout (little-endian):
//   0x46 0x4D ("FM") | u32 seq | u16 tag | u64 payload_len | payload
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <utility>

#include "fmi/core.hpp"
#include "fmi/socket.hpp"

namespace fmi::direct {

inline constexpr std::size_t kFrameHeaderSize = 16;
inline constexpr std::uint16_t kHelloTag = 0xFFFF;

struct FrameHeader {
  std::uint32_t seq = 0;
  std::uint16_t tag = 0;
  std::uint64_t payload_len = 0;

  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

struct Frame {
  std::uint32_t seq = 0;
  std::uint16_t tag = 0;
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

std::array<std::byte, kFrameHeaderSize> encode_header(const FrameHeader& h);
/// Throws ProtocolViolation on bad magic.
FrameHeader decode_header(std::span<const std::byte, kFrameHeaderSize> raw);

Bytes encode_frame(const Frame& f);
/// Throws ProtocolViolation on bad magic or when the length field disagrees
/// with the buffer.
Frame decode_frame(std::span<const std::byte> raw);

/// One established duplex stream to a peer rank. Frames that arrive with a
/// tag nobody is waiting for are queued in arrival order.
///
/// Owned by one thread at a time; movable, not copyable.
class PeerConnection {
 public:
  PeerConnection(Socket sock, int local_rank, int remote_rank);

  int local_rank() const noexcept { return local_rank_; }
  int remote_rank() const noexcept { return remote_rank_; }
  std::uint32_t next_send_seq() const noexcept { return next_send_seq_; }
  std::uint32_t next_recv_seq() const noexcept { return next_recv_seq_; }
  bool is_open() const noexcept { return sock_.valid(); }

  /// Writes exactly one frame. ChannelFailure on stream error.
  void send(std::uint16_t tag, std::span<const std::byte> payload);

  /// Blocks until a frame with `expected_tag` is available. ChannelFailure
  /// on close, ProtocolViolation on bad magic or out-of-order sequence,
  /// Timeout if the deadline passes.
  Bytes recv(std::uint16_t expected_tag, Deadline deadline = std::nullopt);

  void close() noexcept { sock_.reset(); }
  /// Unblocks a reader on another thread without releasing the fd.
  void shutdown() noexcept { sock_.shutdown(); }

 private:
  Socket sock_;
  int local_rank_;
  int remote_rank_;
  std::uint32_t next_send_seq_ = 0;
  std::uint32_t next_recv_seq_ = 0;
  std::deque<std::pair<std::uint16_t, Bytes>> queued_;
};

struct PunchOptions {
  int attempts = 20;
  std::chrono::milliseconds interval{50};
};

/// Pairs through the coordinator, then listens on and connects from the same
/// reused local port toward the peer's observed endpoint. If both directions
/// succeed, the connection initiated by the lower rank is kept.
/// Finishes with a hello exchange that checks the remote rank.
///
/// Errors: ChannelFailure when the coordinator is unreachable, Timeout when
/// pairing or punching does not complete in time.
PeerConnection connect_pair(const Endpoint& coordinator, std::string_view comm_name, std::uint64_t epoch,
                            int self_rank, int peer_rank, std::chrono::milliseconds timeout,
                            PunchOptions punch = {});

}  // namespace fmi::direct

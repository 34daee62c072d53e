// Hole-punching rendezvous: a public coordinator that matches two peers by
// pairing name and tells each one the other's transport-observed endpoint.
//
// Wire protocol (TCP, little-endian):
//   request:  u8 name_len | name (UTF-8, 1..255 bytes)
//   response: u8 status (0=ok, 1=timeout, 2=malformed) | on ok: 4-byte IPv4 | u16 port
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <variant>

#include "fmi/core.hpp"
#include "fmi/socket.hpp"

namespace fmi::rendezvous {

struct PairingTicket {
  std::string name;
  Endpoint observed;
  Clock::time_point arrival{};
};

struct CoordinatorStats {
  std::uint64_t completed = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t malformed = 0;
  std::uint64_t abandoned = 0;
};

/// At most one pending ticket per name; completed pairings drop the entry.
struct CoordinatorState {
  std::map<std::string, PairingTicket, std::less<>> pending;
  CoordinatorStats stats;
};

struct Hold {};
struct Exchange {
  PairingTicket first;   // parked earlier
  PairingTicket second;  // the request that completed the pair
};
using Action = std::variant<Hold, Exchange>;

struct StepResult {
  CoordinatorState state;
  Action action;
};

/// Non-empty, at most 255 bytes, valid UTF-8.
bool valid_pairing_name(std::string_view name) noexcept;

/// "{comm}:{min_rank}-{max_rank}:{epoch}"
std::string pairing_name(std::string_view comm, int rank_a, int rank_b, std::uint64_t epoch);

/// Pure transition. Parks the first request under a name, pairs the second.
/// Throws ProtocolViolation for a malformed name.
StepResult coordinator_step(CoordinatorState state, PairingTicket request);

enum class Status : std::uint8_t { ok = 0, timeout = 1, malformed = 2 };

struct Response {
  Status status = Status::ok;
  Endpoint peer{};

  friend bool operator==(const Response&, const Response&) = default;
};

Bytes encode_request(std::string_view name);
/// Decodes a complete request frame. Throws ProtocolViolation when the frame
/// is truncated or the name is malformed.
std::string decode_request(std::span<const std::byte> frame);
Bytes encode_response(const Response& r);
Response decode_response(std::span<const std::byte> frame);

/// Single-threaded poll loop serving any number of concurrent pairing
/// connections. Tickets parked longer than hold_timeout get a timeout status.
class Coordinator {
 public:
  struct Options {
    Endpoint bind{{127, 0, 0, 1}, 0};
    std::chrono::milliseconds hold_timeout{30000};
  };

  /// Binds immediately; bind failure throws ChannelFailure.
  explicit Coordinator(Options opts);
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  Endpoint endpoint() const { return endpoint_; }

  /// Serves until stop() is called.
  void run();
  void stop();

  CoordinatorStats stats() const;
  std::size_t pending() const;

 private:
  struct Impl;
  Options opts_;
  Socket listener_;
  Endpoint endpoint_;
  int wake_fd_ = -1;
  std::atomic<bool> stopping_{false};
  mutable std::mutex mu_;
  CoordinatorState state_;
};

/// Runs a Coordinator on a background thread for the lifetime of the object.
class BackgroundCoordinator {
 public:
  explicit BackgroundCoordinator(Coordinator::Options opts = {});
  ~BackgroundCoordinator();

  Endpoint endpoint() const { return coord_.endpoint(); }
  Coordinator& coordinator() { return coord_; }

 private:
  Coordinator coord_;
  std::thread thread_;
};

/// Client side of a pairing through an already-bound socket; the socket is
/// connected to the coordinator and stays open so the caller keeps the NAT
/// mapping alive. Returns the counterpart's observed endpoint.
/// Errors: Timeout (no counterpart or explicit timeout status),
/// ChannelFailure (coordinator unreachable or disconnected),
/// ProtocolViolation (malformed name).
Endpoint pair_from(Socket& bound, const Endpoint& coordinator, std::string_view name,
                   std::chrono::milliseconds timeout);

struct PairResult {
  Endpoint peer;
  Endpoint local;  // the reusable local endpoint used for the pairing
};

/// Pairs through a fresh socket bound with address/port reuse.
PairResult pair(const Endpoint& coordinator, std::string_view name, std::chrono::milliseconds timeout);

}  // namespace fmi::rendezvous

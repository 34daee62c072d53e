// Named group of N ranked peers bound to one channel. Owns the collective
// sequence counter and the sticky abort state.
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fmi/collectives.hpp"
#include "fmi/core.hpp"
#include "fmi/direct_channel.hpp"
#include "fmi/profile.hpp"
#include "fmi/socket.hpp"
#include "fmi/store.hpp"

namespace fmi {

struct CommunicatorConfig {
  std::string name = "fmi";
  int world_size = 1;
  int rank = 0;
  /// direct uses the coordinator; any other kind talks to the store.
  ChannelKind channel = ChannelKind::direct;
  Endpoint coordinator;
  Endpoint store;
  /// Mediated only: the poll floor and size limit come from here.
  ChannelProfile profile = table2_profile(ChannelKind::redis);
  std::chrono::milliseconds join_timeout{60000};
  /// Upper bound on any single blocking wait inside a collective.
  std::chrono::milliseconds op_timeout{60000};
  std::uint64_t epoch = 0;
  /// Punch every pair at join instead of only the schedule neighbours.
  bool full_mesh = false;
  direct::PunchOptions punch;

  bool is_direct() const noexcept { return channel == ChannelKind::direct; }

  /// Throws ProtocolViolation on an empty or '/'-containing name, N < 1 or
  /// rank outside [0, N).
  void validate() const;

  /// Reads FMI_COMM_NAME, FMI_RANK, FMI_WORLD_SIZE, FMI_CHANNEL,
  /// FMI_COORDINATOR, FMI_STORE, FMI_EPOCH, FMI_JOIN_TIMEOUT_MS and
  /// FMI_OP_TIMEOUT_MS on top of `base`. Mediated channels pick the
  /// matching table2_profile().
  static CommunicatorConfig from_env(CommunicatorConfig base);
  static CommunicatorConfig from_env();
};

enum class CommState { Active, Aborted };

/// Established peer connections of one rank, used as the transport of the
/// direct collectives.
class DirectMesh final : public collectives::PointToPoint {
 public:
  DirectMesh(int rank, int size) : rank_(rank), peers_(static_cast<std::size_t>(size)) {}

  void add(direct::PeerConnection conn);
  bool connected(int peer) const;

  void send(int peer, std::uint16_t tag, std::span<const std::byte> payload) override;
  Bytes recv(int peer, std::uint16_t tag) override;

  void set_deadline(Deadline d) noexcept { deadline_ = d; }
  std::uint64_t frames_sent() const noexcept { return frames_sent_; }
  void close_all() noexcept;

 private:
  direct::PeerConnection& at(int peer);

  int rank_;
  std::vector<std::optional<direct::PeerConnection>> peers_;
  Deadline deadline_;
  std::uint64_t frames_sent_ = 0;
};

/// Deletes consumed point-to-point keys off the critical path, over its own
/// store connection.
class StoreJanitor {
 public:
  explicit StoreJanitor(const Endpoint& store);
  ~StoreJanitor();

  void remove(std::string key);
  /// Blocks until every queued key has been deleted.
  void drain();

 private:
  void loop();

  store::StoreClient client_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread thread_;
};

class Communicator {
 public:
  /// Forms the group. Direct: punches the required pairs (or all pairs with
  /// full_mesh) and runs a barrier. Mediated: a barrier through 1-byte
  /// objects. The deadline is join_timeout from this call. Any failure is
  /// reported as JoinFailed.
  static Communicator join(const CommunicatorConfig& config);

  Communicator(Communicator&&) noexcept;
  Communicator& operator=(Communicator&&) noexcept;
  ~Communicator();

  const CommunicatorConfig& config() const noexcept { return config_; }
  int rank() const noexcept { return config_.rank; }
  int size() const noexcept { return config_.world_size; }
  CommState state() const noexcept { return state_; }
  std::uint32_t op_seq() const noexcept { return op_seq_; }
  /// Payload frames written by this rank on direct channels, join included.
  std::uint64_t frames_sent() const noexcept;

  /// Marks the communicator Aborted, closes every connection and makes all
  /// later calls rethrow `cause`.
  void abort(const FmiError& cause) noexcept;

  DataBuffer bcast(const DataBuffer& buf, int root);
  void barrier();
  DataBuffer gather(const DataBuffer& buf, int root);
  DataBuffer scatter(const DataBuffer& buf, int root);
  DataBuffer reduce(const DataBuffer& buf, const ReductionOp& op, int root);
  DataBuffer allreduce(const DataBuffer& buf, const ReductionOp& op);
  DataBuffer scan(const DataBuffer& buf, const ReductionOp& op);

  /// Point-to-point messages for benchmarks, ordered per (sender, receiver).
  void send(int peer, std::span<const std::byte> payload);
  Bytes recv(int peer);

 private:
  explicit Communicator(CommunicatorConfig config);

  template <class F>
  auto run(F&& body);
  template <class D, class M>
  auto dispatch(D&& on_direct, M&& on_mediated);
  collectives::DirectContext direct_ctx();
  collectives::MediatedContext mediated_ctx();
  std::string p2p_key(int src, int dst, std::uint64_t seq) const;
  void check_peer(int peer) const;

  CommunicatorConfig config_;
  CommState state_ = CommState::Active;
  std::optional<FmiError> cause_;
  std::uint32_t op_seq_ = 0;
  std::unique_ptr<DirectMesh> mesh_;
  std::unique_ptr<store::StoreClient> store_;
  std::unique_ptr<StoreJanitor> janitor_;
  std::vector<std::uint64_t> sent_seq_;
  std::vector<std::uint64_t> recv_seq_;
};

}  // namespace fmi

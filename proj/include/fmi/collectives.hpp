// The seven collectives in two algorithm families:
//  - direct: binomial trees (bcast, gather, scatter, reduce), recursive
//    doubling (allreduce, barrier), two-phase tree scan;
//  - mediated: upload and poll over a key-value store.
// Plus the pure schedule generators they are built on.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmi/core.hpp"
#include "fmi/store.hpp"

namespace fmi::collectives {

enum class CollectiveKind : std::uint8_t { bcast, barrier, gather, scatter, reduce, allreduce, scan };

inline constexpr CollectiveKind kAllCollectives[] = {
    CollectiveKind::bcast,  CollectiveKind::barrier,   CollectiveKind::gather, CollectiveKind::scatter,
    CollectiveKind::reduce, CollectiveKind::allreduce, CollectiveKind::scan};

std::string_view to_string(CollectiveKind kind) noexcept;
CollectiveKind parse_collective(std::string_view name);

// ---------------------------------------------------------------------------
// Schedules

struct Step {
  int round = 0;  // 1-based
  int sender = 0;
  int receiver = 0;

  friend bool operator==(const Step&, const Step&) = default;
};

struct CommSchedule {
  std::vector<Step> steps;

  int depth() const noexcept;
};

/// ceil(log2(n)) for n >= 1.
int ceil_log2(int n) noexcept;
/// Largest power of two <= n, n >= 1.
int floor_pow2(int n) noexcept;

/// Broadcast tree rooted at `root`: n-1 steps, ceil(log2 n) rounds; in round
/// k every rank that already holds the data at relative rank v < 2^(k-1)
/// sends to relative rank v + 2^(k-1). ProtocolViolation if root is out of range.
CommSchedule binomial_schedule(int n, int root);

enum class RdPhase { fold, exchange, unfold };

/// partner[r] is the rank r talks to this round, or -1 when idle. In fold
/// rounds the even rank of each pair sends to the odd one; in unfold rounds
/// the odd rank sends back.
struct RdRound {
  RdPhase phase = RdPhase::exchange;
  std::vector<int> partner;
};

/// Recursive doubling for any n >= 1. Non-powers of two fold the first
/// 2*(n-p) ranks pairwise into p participants before the exchange rounds and
/// unfold afterwards.
std::vector<RdRound> recursive_doubling_rounds(int n);

/// Ranks that any direct collective for this world size may exchange frames
/// with: circular power-of-two distances plus recursive-doubling partners.
std::vector<int> required_peers(int n, int rank);

// ---------------------------------------------------------------------------
// Direct family

class PointToPoint {
 public:
  virtual ~PointToPoint() = default;
  virtual void send(int peer, std::uint16_t tag, std::span<const std::byte> payload) = 0;
  virtual Bytes recv(int peer, std::uint16_t tag) = 0;
};

struct DirectContext {
  PointToPoint& net;
  int rank;
  int size;
  std::uint32_t op_seq;
};

/// Tag layout: high byte op_seq mod 256, then 3 bits of collective kind and
/// 5 bits of round.
std::uint16_t make_tag(std::uint32_t op_seq, CollectiveKind kind, int round) noexcept;

namespace direct {

DataBuffer bcast(const DirectContext& ctx, const DataBuffer& buf, int root);
void barrier(const DirectContext& ctx);
/// Root gets the rank-order concatenation; other ranks get an empty buffer.
DataBuffer gather(const DirectContext& ctx, const DataBuffer& buf, int root);
/// Root's buffer count must be divisible by size. Non-roots pass a buffer
/// carrying only the datatype.
DataBuffer scatter(const DirectContext& ctx, const DataBuffer& buf, int root);
/// Non-commutative ops are folded in ascending rank order via rank 0.
DataBuffer reduce(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op, int root);
DataBuffer allreduce(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op);
/// Inclusive prefix: rank i gets op over ranks 0..i.
DataBuffer scan(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op);

}  // namespace direct

// ---------------------------------------------------------------------------
// Mediated family

struct MediatedContext {
  store::KvStore& store;
  int rank;
  int size;
  /// "{comm}/{epoch}/{op_seq}/" - every key of one invocation lives under it.
  std::string prefix;
  store::PollOptions poll;
};

std::string mediated_prefix(std::string_view comm, std::uint64_t epoch, std::uint32_t op_seq);

namespace mediated {

DataBuffer bcast(const MediatedContext& ctx, const DataBuffer& buf, int root);
void barrier(const MediatedContext& ctx);
DataBuffer gather(const MediatedContext& ctx, const DataBuffer& buf, int root);
DataBuffer scatter(const MediatedContext& ctx, const DataBuffer& buf, int root);
DataBuffer reduce(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op, int root);
/// Reduce at rank 0 followed by a broadcast of the result.
DataBuffer allreduce(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op);
DataBuffer scan(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op);

}  // namespace mediated

}  // namespace fmi::collectives

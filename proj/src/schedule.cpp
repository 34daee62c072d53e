#include <algorithm>
#include <set>

#include "fmi/collectives.hpp"

namespace fmi::collectives {

std::string_view to_string(CollectiveKind kind) noexcept {
  switch (kind) {
    case CollectiveKind::bcast: return "bcast";
    case CollectiveKind::barrier: return "barrier";
    case CollectiveKind::gather: return "gather";
    case CollectiveKind::scatter: return "scatter";
    case CollectiveKind::reduce: return "reduce";
    case CollectiveKind::allreduce: return "allreduce";
    case CollectiveKind::scan: return "scan";
  }
  return "unknown";
}

CollectiveKind parse_collective(std::string_view name) {
  for (auto k : kAllCollectives) {
    if (to_string(k) == name) return k;
  }
  throw FmiError(ErrorKind::ProtocolViolation, "unknown collective '" + std::string(name) + "'");
}

int CommSchedule::depth() const noexcept {
  int d = 0;
  for (const auto& s : steps) d = std::max(d, s.round);
  return d;
}

int ceil_log2(int n) noexcept {
  int k = 0;
  while ((1 << k) < n) ++k;
  return k;
}

int floor_pow2(int n) noexcept {
  int p = 1;
  while (p * 2 <= n) p *= 2;
  return p;
}

CommSchedule binomial_schedule(int n, int root) {
  if (n < 1 || root < 0 || root >= n) {
    throw FmiError(ErrorKind::ProtocolViolation,
                   "root " + std::to_string(root) + " out of range for " + std::to_string(n) + " ranks");
  }
  CommSchedule s;
  int round = 1;
  for (int mask = 1; mask < n; mask <<= 1, ++round) {
    for (int v = 0; v < mask && v + mask < n; ++v) {
      s.steps.push_back({round, (v + root) % n, (v + mask + root) % n});
    }
  }
  return s;
}

std::vector<RdRound> recursive_doubling_rounds(int n) {
  std::vector<RdRound> rounds;
  if (n <= 1) return rounds;
  const int p = floor_pow2(n);
  const int rem = n - p;

  auto fold_round = [&](RdPhase phase) {
    RdRound r{phase, std::vector<int>(static_cast<std::size_t>(n), -1)};
    for (int i = 0; i < 2 * rem; i += 2) {
      r.partner[static_cast<std::size_t>(i)] = i + 1;
      r.partner[static_cast<std::size_t>(i + 1)] = i;
    }
    return r;
  };
  // Participant index <-> original rank. Folded pairs are represented by
  // their odd member.
  auto to_rank = [&](int nr) { return nr < rem ? 2 * nr + 1 : nr + rem; };
  auto to_participant = [&](int r) { return r < 2 * rem ? (r % 2 == 1 ? r / 2 : -1) : r - rem; };

  if (rem > 0) rounds.push_back(fold_round(RdPhase::fold));
  for (int mask = 1; mask < p; mask <<= 1) {
    RdRound r{RdPhase::exchange, std::vector<int>(static_cast<std::size_t>(n), -1)};
    for (int rank = 0; rank < n; ++rank) {
      const int nr = to_participant(rank);
      if (nr >= 0) r.partner[static_cast<std::size_t>(rank)] = to_rank(nr ^ mask);
    }
    rounds.push_back(std::move(r));
  }
  if (rem > 0) rounds.push_back(fold_round(RdPhase::unfold));
  return rounds;
}

std::vector<int> required_peers(int n, int rank) {
  std::set<int> peers;
  for (int d = 1; d < n; d <<= 1) {
    peers.insert((rank + d) % n);
    peers.insert((rank - d % n + n) % n);
  }
  for (const auto& r : recursive_doubling_rounds(n)) {
    const int p = r.partner[static_cast<std::size_t>(rank)];
    if (p >= 0) peers.insert(p);
  }
  peers.erase(rank);
  return {peers.begin(), peers.end()};
}

std::uint16_t make_tag(std::uint32_t op_seq, CollectiveKind kind, int round) noexcept {
  return static_cast<std::uint16_t>(((op_seq & 0xFFu) << 8) | (static_cast<unsigned>(kind) << 5) |
                                    (static_cast<unsigned>(round) & 0x1Fu));
}

std::string mediated_prefix(std::string_view comm, std::uint64_t epoch, std::uint32_t op_seq) {
  return std::string(comm) + "/" + std::to_string(epoch) + "/" + std::to_string(op_seq) + "/";
}

}  // namespace fmi::collectives

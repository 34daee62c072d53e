// Benchmark workloads run inside worker processes, the launcher that spawns
// a local fleet of workers, and report rendering.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmi/collectives.hpp"
#include "fmi/communicator.hpp"
#include "fmi/profile.hpp"
#include "fmi/store.hpp"

namespace fmi::bench {

enum class BenchKind { pingpong, one_to_many, collective, verify };

std::string_view to_string(BenchKind kind) noexcept;
BenchKind parse_bench_kind(std::string_view name);

struct BenchmarkSpec {
  BenchKind kind = BenchKind::pingpong;
  collectives::CollectiveKind collective = collectives::CollectiveKind::allreduce;
  ChannelKind channel = ChannelKind::direct;
  int world_size = 2;
  std::uint64_t size_bytes = 1;
  int reps = 30;
  int warmups = 1;
  /// verify only: random trials per collective and their seed.
  int trials = 100;
  std::uint64_t seed = 1;

  /// ProtocolViolation on reps < 1, size 0, or a world size the kind
  /// cannot run with.
  void validate() const;
};

struct Summary {
  double median = 0;
  double mean = 0;
  double p95 = 0;
  double max = 0;
};

/// ProtocolViolation on an empty sample set.
Summary summarize(std::span<const double> samples);

// ---------------------------------------------------------------------------
// Workloads. Each returns this rank's per-repetition durations in seconds,
// warmups excluded; ranks that do not time anything return an empty vector.

/// N = 2. Rank 0 sends, rank 1 echoes; sample = round trip / 2.
std::vector<double> pingpong(Communicator& comm, std::uint64_t size, int reps, int warmups);

/// Rank 0 sends `size` bytes to every other rank per repetition, one
/// message per receiver. Repetitions start with a barrier.
std::vector<double> one_to_many(Communicator& comm, std::uint64_t size, int reps, int warmups);

/// Per repetition: barrier, then the timed collective on the standard
/// inputs (one int32 per rank; 5000 int32 in total for gather and scatter).
/// Results are checked and a mismatch raises ProtocolViolation.
std::vector<double> collective_bench(Communicator& comm, collectives::CollectiveKind kind, int reps,
                                     int warmups);

/// Payload bytes per rank of collective_bench for this kind and world size.
std::uint64_t collective_payload_bytes(collectives::CollectiveKind kind, int world_size);

/// Runs `trials` random instances of every collective and compares each
/// result bitwise with the serial reference. Inputs, ops, roots and counts
/// come from `seed`, so every rank derives the same trial. Throws
/// ProtocolViolation naming the first mismatch.
void verify_collectives(Communicator& comm, int trials, std::uint64_t seed);

/// Non-commutative associative op on int64: each element packs an affine map
/// x -> a*x + b mod 2^32 (a high, b low); the op composes lhs then rhs.
ReductionOp affine_op();

// ---------------------------------------------------------------------------
// Worker process entry

struct WorkerOptions {
  BenchmarkSpec spec;
  std::filesystem::path samples_out;
  std::filesystem::path status_out;
};

/// Joins from FMI_* environment, runs the workload and writes samples and a
/// status line ("ok", or "error <Kind> <Active|Aborted> <detail>"). Returns
/// the process exit code.
int run_worker(const WorkerOptions& opts);

// ---------------------------------------------------------------------------
// Launcher

struct LaunchOptions {
  std::filesystem::path worker_binary;
  /// Start a coordinator (direct) or store (mediated) in this process.
  bool auto_services = true;
  Endpoint coordinator;
  Endpoint store;
  /// Store emulation; defaults to table2_profile(channel).
  std::optional<ChannelProfile> store_profile;
  double latency_scale = 1.0;
  bool jitter = false;
  std::chrono::milliseconds join_timeout{60000};
  std::chrono::milliseconds op_timeout{60000};
  /// Whole-world limit; on expiry every worker is killed.
  std::chrono::milliseconds world_timeout{std::chrono::minutes(10)};
  /// Fault injection: SIGKILL this rank `kill_after` after spawning.
  std::optional<int> kill_rank;
  std::chrono::milliseconds kill_after{1000};
  std::string comm_name = "bench";
  std::uint64_t epoch = 0;
};

struct RankOutcome {
  int rank = 0;
  int exit_code = -1;  // -1 when killed by a signal
  int signal = 0;
  std::string status;  // status line written by the worker, if any
  std::vector<double> samples;

  bool ok() const noexcept { return exit_code == 0 && status == "ok"; }
};

struct WorldResult {
  BenchmarkSpec spec;
  std::vector<RankOutcome> ranks;
  std::vector<int> failed_ranks;
  /// Per repetition, the maximum across workers.
  std::vector<double> samples;
  std::optional<store::MeterLedger> ledger;
  std::optional<Money> metered_cost;
  std::string preset;
  double elapsed = 0;  // seconds, spawn to last exit

  bool ok() const noexcept { return failed_ranks.empty(); }
};

WorldResult launch_world(const BenchmarkSpec& spec, const LaunchOptions& opts);

/// Number of TCP sockets in LISTEN state (IPv4 and IPv6) on this host.
std::size_t listening_sockets();

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { csv, text };

/// CSV: header "benchmark,channel,world_size,size_bytes,rep,seconds", one
/// row per sample, then "# summary" footer lines. Text: one aligned summary
/// line per result.
void emit_report(std::span<const WorldResult> results, ReportFormat format, std::ostream& out);

}  // namespace fmi::bench

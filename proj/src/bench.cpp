#include "fmi/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fmi/reference.hpp"

namespace fmi::bench {

using collectives::CollectiveKind;

std::string_view to_string(BenchKind kind) noexcept {
  switch (kind) {
    case BenchKind::pingpong: return "pingpong";
    case BenchKind::one_to_many: return "one-to-many";
    case BenchKind::collective: return "collective";
    case BenchKind::verify: return "verify";
  }
  return "unknown";
}

BenchKind parse_bench_kind(std::string_view name) {
  for (auto k : {BenchKind::pingpong, BenchKind::one_to_many, BenchKind::collective, BenchKind::verify}) {
    if (to_string(k) == name) return k;
  }
  throw FmiError(ErrorKind::ProtocolViolation, "unknown benchmark '" + std::string(name) + "'");
}

void BenchmarkSpec::validate() const {
  auto fail = [](const std::string& m) { throw FmiError(ErrorKind::ProtocolViolation, m); };
  if (reps < 1) fail("repetitions must be at least 1");
  if (warmups < 0) fail("warmups must be non-negative");
  if (world_size < 1) fail("world size must be positive");
  switch (kind) {
    case BenchKind::pingpong:
      if (world_size != 2) fail("pingpong needs exactly 2 ranks");
      if (size_bytes == 0) fail("message size must be at least 1 byte");
      break;
    case BenchKind::one_to_many:
      if (world_size < 2) fail("one-to-many needs at least one receiver");
      if (size_bytes == 0) fail("message size must be at least 1 byte");
      break;
    case BenchKind::collective: break;
    case BenchKind::verify:
      if (trials < 1) fail("trials must be at least 1");
      break;
  }
}

Summary summarize(std::span<const double> samples) {
  if (samples.empty()) throw FmiError(ErrorKind::ProtocolViolation, "no samples to summarize");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  Summary out;
  out.median = n % 2 ? s[n / 2] : (s[n / 2 - 1] + s[n / 2]) / 2;
  out.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
  const auto rank95 = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  out.p95 = s[std::max<std::size_t>(rank95, 1) - 1];
  out.max = s.back();
  return out;
}

// ---------------------------------------------------------------------------
// Workloads

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::vector<double> pingpong(Communicator& comm, std::uint64_t size, int reps, int warmups) {
  if (comm.size() != 2) throw FmiError(ErrorKind::ProtocolViolation, "pingpong needs exactly 2 ranks");
  if (size == 0) throw FmiError(ErrorKind::ProtocolViolation, "pingpong message size must be at least 1 byte");
  Bytes msg(size, std::byte{0x5A});
  std::vector<double> samples;
  for (int i = 0; i < warmups + reps; ++i) {
    if (comm.rank() == 0) {
      const auto t0 = Clock::now();
      comm.send(1, msg);
      auto echo = comm.recv(1);
      const double half = seconds_since(t0) / 2;
      if (echo.size() != size) throw FmiError(ErrorKind::ProtocolViolation, "pingpong echo has wrong size");
      if (i >= warmups) samples.push_back(half);
    } else {
      auto got = comm.recv(0);
      comm.send(0, got);
    }
  }
  return samples;
}

std::vector<double> one_to_many(Communicator& comm, std::uint64_t size, int reps, int warmups) {
  if (comm.size() < 2) throw FmiError(ErrorKind::ProtocolViolation, "one-to-many needs at least one receiver");
  if (size == 0) throw FmiError(ErrorKind::ProtocolViolation, "message size must be at least 1 byte");
  Bytes msg(size, std::byte{0xA5});
  std::vector<double> samples;
  for (int i = 0; i < warmups + reps; ++i) {
    comm.barrier();
    const auto t0 = Clock::now();
    if (comm.rank() == 0) {
      for (int r = 1; r < comm.size(); ++r) comm.send(r, msg);
    } else {
      auto got = comm.recv(0);
      if (got.size() != size) throw FmiError(ErrorKind::ProtocolViolation, "one-to-many payload has wrong size");
    }
    const double dt = seconds_since(t0);
    if (i >= warmups) samples.push_back(dt);
  }
  return samples;
}

std::uint64_t collective_payload_bytes(CollectiveKind kind, int world_size) {
  switch (kind) {
    case CollectiveKind::gather:
    case CollectiveKind::scatter: return static_cast<std::uint64_t>(5000 / world_size) * 4;
    case CollectiveKind::barrier: return 0;
    default: return 4;
  }
}

std::vector<double> collective_bench(Communicator& comm, CollectiveKind kind, int reps, int warmups) {
  const int n = comm.size();
  const int r = comm.rank();
  const auto per_rank = static_cast<std::int32_t>(5000 / n);
  std::vector<std::int32_t> root_values(static_cast<std::size_t>(per_rank) * static_cast<std::size_t>(n));
  std::iota(root_values.begin(), root_values.end(), 0);
  const auto one = buffer_of<std::int32_t>({1});
  const auto mismatch = [&] {
    throw FmiError(ErrorKind::ProtocolViolation,
                   std::string(collectives::to_string(kind)) + " result mismatch on rank " + std::to_string(r));
  };

  std::vector<double> samples;
  for (int i = 0; i < warmups + reps; ++i) {
    comm.barrier();
    const auto t0 = Clock::now();
    switch (kind) {
      case CollectiveKind::bcast: {
        auto out = comm.bcast(buffer_of<std::int32_t>({r == 0 ? 42 : 0}), 0);
        if (unpack<std::int32_t>(out) != std::vector<std::int32_t>{42}) mismatch();
        break;
      }
      case CollectiveKind::barrier: comm.barrier(); break;
      case CollectiveKind::gather: {
        std::vector<std::int32_t> mine(root_values.begin() + static_cast<std::ptrdiff_t>(r) * per_rank,
                                       root_values.begin() + static_cast<std::ptrdiff_t>(r + 1) * per_rank);
        auto out = comm.gather(buffer_of(mine), 0);
        if (r == 0 && unpack<std::int32_t>(out) != root_values) mismatch();
        break;
      }
      case CollectiveKind::scatter: {
        auto in = r == 0 ? buffer_of(root_values) : DataBuffer(Datatype::of<std::int32_t>());
        auto out = unpack<std::int32_t>(comm.scatter(in, 0));
        if (out.size() != static_cast<std::size_t>(per_rank) || (per_rank > 0 && out.front() != r * per_rank)) {
          mismatch();
        }
        break;
      }
      case CollectiveKind::reduce: {
        auto out = comm.reduce(one, ReductionOp::sum(), 0);
        if (r == 0 && unpack<std::int32_t>(out) != std::vector<std::int32_t>{n}) mismatch();
        break;
      }
      case CollectiveKind::allreduce: {
        auto out = comm.allreduce(one, ReductionOp::sum());
        if (unpack<std::int32_t>(out) != std::vector<std::int32_t>{n}) mismatch();
        break;
      }
      case CollectiveKind::scan: {
        auto out = comm.scan(one, ReductionOp::sum());
        if (unpack<std::int32_t>(out) != std::vector<std::int32_t>{r + 1}) mismatch();
        break;
      }
    }
    const double dt = seconds_since(t0);
    if (i >= warmups) samples.push_back(dt);
  }
  return samples;
}

ReductionOp affine_op() {
  return ReductionOp::custom<std::int64_t>(
      "affine",
      [](std::int64_t lhs, std::int64_t rhs) {
        const auto f = static_cast<std::uint64_t>(lhs);
        const auto g = static_cast<std::uint64_t>(rhs);
        const std::uint32_t a1 = static_cast<std::uint32_t>(f >> 32), b1 = static_cast<std::uint32_t>(f);
        const std::uint32_t a2 = static_cast<std::uint32_t>(g >> 32), b2 = static_cast<std::uint32_t>(g);
        // g(f(x)) = a2*(a1*x + b1) + b2
        const std::uint32_t a = a1 * a2;
        const std::uint32_t b = a2 * b1 + b2;
        return static_cast<std::int64_t>((static_cast<std::uint64_t>(a) << 32) | b);
      },
      false);
}

namespace {

struct TrialOp {
  const char* label;
  ReductionOp op;
  TypeKind type;
};

std::vector<TrialOp> trial_ops() {
  return {
      {"sum/int32", ReductionOp::sum(), TypeKind::int32},
      {"sum/int64", ReductionOp::sum(), TypeKind::int64},
      {"prod/int64", ReductionOp::prod(), TypeKind::int64},
      {"min/int32", ReductionOp::min(), TypeKind::int32},
      {"max/int64", ReductionOp::max(), TypeKind::int64},
      {"sum/float64", ReductionOp::sum(), TypeKind::float64},
      {"max/float64", ReductionOp::max(), TypeKind::float64},
      {"affine/int64", affine_op(), TypeKind::int64},
  };
}

// Floating-point inputs are small integers so every fold order is exact.
DataBuffer random_buffer(std::mt19937_64& rng, TypeKind type, std::size_t count) {
  switch (type) {
    case TypeKind::int32: {
      std::vector<std::int32_t> v(count);
      for (auto& x : v) x = static_cast<std::int32_t>(rng());
      return buffer_of(v);
    }
    case TypeKind::int64: {
      std::vector<std::int64_t> v(count);
      for (auto& x : v) x = static_cast<std::int64_t>(rng());
      return buffer_of(v);
    }
    case TypeKind::float64: {
      std::uniform_int_distribution<int> d(-1000, 1000);
      std::vector<double> v(count);
      for (auto& x : v) x = d(rng);
      return buffer_of(v);
    }
    case TypeKind::byte: {
      std::vector<std::uint8_t> v(count);
      for (auto& x : v) x = static_cast<std::uint8_t>(rng());
      return buffer_of(v);
    }
  }
  return {};
}

}  // namespace

void verify_collectives(Communicator& comm, int trials, std::uint64_t seed) {
  const int n = comm.size();
  const int me = comm.rank();
  const auto ops = trial_ops();
  for (int t = 0; t < trials; ++t) {
    for (auto kind : collectives::kAllCollectives) {
      std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t) * 131 +
                          static_cast<std::uint64_t>(kind));
      const auto& op = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng)];
      const auto count = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
      const int root = std::uniform_int_distribution<int>(0, n - 1)(rng);
      std::vector<DataBuffer> inputs;
      for (int r = 0; r < n; ++r) inputs.push_back(random_buffer(rng, op.type, count));
      const DataBuffer empty{Datatype(op.type)};

      DataBuffer got, want;
      switch (kind) {
        case CollectiveKind::bcast:
          got = comm.bcast(inputs[static_cast<std::size_t>(me)], root);
          want = inputs[static_cast<std::size_t>(root)];
          break;
        case CollectiveKind::barrier:
          comm.barrier();
          break;
        case CollectiveKind::gather:
          got = comm.gather(inputs[static_cast<std::size_t>(me)], root);
          want = me == root ? reference::gather(inputs) : empty;
          break;
        case CollectiveKind::scatter: {
          const auto root_buf = random_buffer(rng, op.type, count * static_cast<std::size_t>(n));
          got = comm.scatter(me == root ? root_buf : empty, root);
          want = reference::scatter(root_buf, n)[static_cast<std::size_t>(me)];
          break;
        }
        case CollectiveKind::reduce:
          got = comm.reduce(inputs[static_cast<std::size_t>(me)], op.op, root);
          want = me == root ? reference::reduce(inputs, op.op) : empty;
          break;
        case CollectiveKind::allreduce:
          got = comm.allreduce(inputs[static_cast<std::size_t>(me)], op.op);
          want = reference::reduce(inputs, op.op);
          break;
        case CollectiveKind::scan:
          got = comm.scan(inputs[static_cast<std::size_t>(me)], op.op);
          want = reference::scan(inputs, op.op)[static_cast<std::size_t>(me)];
          break;
      }
      if (!(got == want)) {
        throw FmiError(ErrorKind::ProtocolViolation,
                       "verify: " + std::string(collectives::to_string(kind)) + " (" + op.label + ", root " +
                           std::to_string(root) + ", count " + std::to_string(count) + ") trial " +
                           std::to_string(t) + " differs from reference on rank " + std::to_string(me));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Worker

int run_worker(const WorkerOptions& opts) {
  ignore_sigpipe();
  const auto& spec = opts.spec;
  std::optional<Communicator> comm;
  std::string status = "ok";
  int code = 0;
  try {
    spec.validate();
    auto config = CommunicatorConfig::from_env();
    config.full_mesh = spec.kind == BenchKind::one_to_many;
    if (config.world_size != spec.world_size) {
      throw FmiError(ErrorKind::ProtocolViolation, "FMI_WORLD_SIZE disagrees with --world-size");
    }
    comm.emplace(Communicator::join(config));
    std::vector<double> samples;
    switch (spec.kind) {
      case BenchKind::pingpong: samples = pingpong(*comm, spec.size_bytes, spec.reps, spec.warmups); break;
      case BenchKind::one_to_many: samples = one_to_many(*comm, spec.size_bytes, spec.reps, spec.warmups); break;
      case BenchKind::collective: samples = collective_bench(*comm, spec.collective, spec.reps, spec.warmups); break;
      case BenchKind::verify: verify_collectives(*comm, spec.trials, spec.seed); break;
    }
    if (!opts.samples_out.empty()) {
      std::ofstream out(opts.samples_out);
      out << std::setprecision(17);
      for (double s : samples) out << s << '\n';
    }
  } catch (const FmiError& e) {
    const bool aborted = comm && comm->state() == CommState::Aborted;
    status = "error " + std::string(fmi::to_string(e.kind())) + (aborted ? " Aborted " : " Active ") + e.detail();
    code = 3;
  } catch (const std::exception& e) {
    status = std::string("error Unknown Active ") + e.what();
    code = 4;
  }
  std::replace(status.begin(), status.end(), '\n', ' ');
  if (!opts.status_out.empty()) {
    std::ofstream(opts.status_out) << status << '\n';
  }
  if (code != 0) std::fprintf(stderr, "rank %s: %s\n", std::getenv("FMI_RANK") ? std::getenv("FMI_RANK") : "?",
                              status.c_str());
  return code;
}

// ---------------------------------------------------------------------------
// Reports

void emit_report(std::span<const WorldResult> results, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::csv) {
    out << "benchmark,channel,world_size,size_bytes,rep,seconds\n";
    for (const auto& r : results) {
      for (std::size_t i = 0; i < r.samples.size(); ++i) {
        out << to_string(r.spec.kind);
        if (r.spec.kind == BenchKind::collective) out << ':' << collectives::to_string(r.spec.collective);
        out << ',' << fmi::to_string(r.spec.channel) << ',' << r.spec.world_size << ',' << r.spec.size_bytes << ','
            << i << ',' << std::setprecision(9) << r.samples[i] << '\n';
      }
    }
    for (const auto& r : results) {
      out << "# summary," << to_string(r.spec.kind);
      if (r.spec.kind == BenchKind::collective) out << ':' << collectives::to_string(r.spec.collective);
      out << ',' << fmi::to_string(r.spec.channel) << ',' << r.spec.world_size << ',' << r.spec.size_bytes;
      if (!r.samples.empty()) {
        const auto s = summarize(r.samples);
        out << std::setprecision(6) << ",median=" << s.median << ",mean=" << s.mean << ",p95=" << s.p95
            << ",max=" << s.max;
      }
      if (r.metered_cost) out << ",metered_cost_usd=" << std::fixed << std::setprecision(9) << r.metered_cost->dollars()
                              << std::defaultfloat;
      if (!r.failed_ranks.empty()) {
        out << ",failed_ranks=";
        for (std::size_t i = 0; i < r.failed_ranks.size(); ++i) out << (i ? ";" : "") << r.failed_ranks[i];
      }
      out << '\n';
    }
    return;
  }
  out << std::left << std::setw(22) << "benchmark" << std::setw(10) << "channel" << std::right << std::setw(6) << "N"
      << std::setw(12) << "bytes" << std::setw(6) << "reps" << std::setw(13) << "median_ms" << std::setw(13)
      << "mean_ms" << std::setw(13) << "p95_ms" << std::setw(13) << "max_ms" << std::setw(14) << "cost_usd" << '\n';
  for (const auto& r : results) {
    std::string name(to_string(r.spec.kind));
    if (r.spec.kind == BenchKind::collective) name += ":" + std::string(collectives::to_string(r.spec.collective));
    out << std::left << std::setw(22) << name << std::setw(10) << fmi::to_string(r.spec.channel) << std::right
        << std::setw(6) << r.spec.world_size << std::setw(12) << r.spec.size_bytes << std::setw(6)
        << r.samples.size();
    out << std::fixed << std::setprecision(4);
    if (!r.samples.empty()) {
      const auto s = summarize(r.samples);
      out << std::setw(13) << s.median * 1e3 << std::setw(13) << s.mean * 1e3 << std::setw(13) << s.p95 * 1e3
          << std::setw(13) << s.max * 1e3;
    } else {
      out << std::setw(13) << "-" << std::setw(13) << "-" << std::setw(13) << "-" << std::setw(13) << "-";
    }
    if (r.metered_cost) {
      out << std::setw(14) << std::setprecision(9) << r.metered_cost->dollars();
    } else {
      out << std::setw(14) << "-";
    }
    out << std::defaultfloat << '\n';
    if (!r.failed_ranks.empty()) {
      out << "  failed ranks:";
      for (int f : r.failed_ranks) out << ' ' << f;
      out << '\n';
    }
  }
}

}  // namespace fmi::bench

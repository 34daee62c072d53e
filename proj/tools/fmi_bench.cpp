// Benchmark driver: spawns a local fleet of workers, runs ping-pong,
// one-to-many and collective benchmarks, and prints cost-model reports.
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmi/bench.hpp"
#include "fmi/perfmodel.hpp"

namespace {

using fmi::bench::BenchKind;
using fmi::bench::BenchmarkSpec;

std::filesystem::path self_binary() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::filesystem::path("fmi-bench") : p;
}

struct RunArgs {
  std::string channel = "direct";
  int world_size = 2;
  std::uint64_t size = 1;
  int reps = 30;
  int warmups = 1;
  int receivers = 0;
  std::string collective = "allreduce";
  int trials = 100;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "text";
  bool auto_services = false;
  std::string coordinator;
  std::string store;
  double latency_scale = 1.0;
  bool jitter = false;
  long join_timeout_ms = 60000;
  long op_timeout_ms = 60000;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--channel", a.channel, "direct, s3, dynamodb or redis")->capture_default_str();
  cmd->add_option("--world-size", a.world_size, "number of workers")->capture_default_str();
  cmd->add_option("--size", a.size, "message size in bytes")->capture_default_str();
  cmd->add_option("--reps", a.reps, "timed repetitions")->capture_default_str();
  cmd->add_option("--warmups", a.warmups, "discarded leading repetitions")->capture_default_str();
  cmd->add_option("--out", a.out, "write the CSV report here");
  cmd->add_option("--format", a.format, "stdout format: text or csv")->capture_default_str();
  cmd->add_flag("--auto-services", a.auto_services, "start coordinator or store in this process");
  cmd->add_option("--coordinator", a.coordinator, "rendezvous address when not auto-starting");
  cmd->add_option("--store", a.store, "store address when not auto-starting");
  cmd->add_option("--latency-scale", a.latency_scale, "multiplier on injected store latency")
      ->capture_default_str();
  cmd->add_flag("--jitter", a.jitter, "jitter injected store latency by +-10%");
  cmd->add_option("--join-timeout-ms", a.join_timeout_ms)->capture_default_str();
  cmd->add_option("--op-timeout-ms", a.op_timeout_ms)->capture_default_str();
}

int run_world(BenchKind kind, const RunArgs& a) {
  BenchmarkSpec spec;
  spec.kind = kind;
  spec.channel = fmi::parse_channel_kind(a.channel);
  spec.world_size = kind == BenchKind::one_to_many ? a.receivers + 1 : a.world_size;
  spec.size_bytes = a.size;
  spec.reps = a.reps;
  spec.warmups = a.warmups;
  spec.trials = a.trials;
  spec.seed = a.seed;
  if (kind == BenchKind::one_to_many && a.receivers < 1) {
    throw fmi::FmiError(fmi::ErrorKind::ProtocolViolation, "--receivers must be at least 1");
  }
  if (kind == BenchKind::collective) {
    spec.collective = fmi::collectives::parse_collective(a.collective);
    spec.size_bytes = fmi::bench::collective_payload_bytes(spec.collective, spec.world_size);
  }

  fmi::bench::LaunchOptions opts;
  opts.worker_binary = self_binary();
  opts.auto_services = a.auto_services;
  if (!a.auto_services) {
    if (spec.channel == fmi::ChannelKind::direct && spec.world_size > 1) {
      if (a.coordinator.empty()) throw fmi::FmiError(fmi::ErrorKind::ProtocolViolation, "--coordinator required");
      opts.coordinator = fmi::parse_endpoint(a.coordinator);
    } else if (spec.world_size > 1) {
      if (a.store.empty()) throw fmi::FmiError(fmi::ErrorKind::ProtocolViolation, "--store required");
      opts.store = fmi::parse_endpoint(a.store);
    }
  }
  opts.latency_scale = a.latency_scale;
  opts.jitter = a.jitter;
  opts.join_timeout = std::chrono::milliseconds(a.join_timeout_ms);
  opts.op_timeout = std::chrono::milliseconds(a.op_timeout_ms);
  opts.comm_name = "bench" + std::to_string(::getpid());

  const auto result = fmi::bench::launch_world(spec, opts);
  const std::vector<fmi::bench::WorldResult> all{result};
  fmi::bench::emit_report(all, a.format == "csv" ? fmi::bench::ReportFormat::csv : fmi::bench::ReportFormat::text,
                          std::cout);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    fmi::bench::emit_report(all, fmi::bench::ReportFormat::csv, out);
  }
  if (kind == BenchKind::one_to_many && !result.samples.empty()) {
    const auto s = fmi::bench::summarize(result.samples);
    std::cout << "aggregate bandwidth (median): "
              << static_cast<double>(spec.size_bytes) * a.receivers / s.median / 1e6 << " MB/s\n";
  }
  for (const auto& r : result.ranks) {
    if (!r.ok()) {
      std::cerr << "rank " << r.rank << " failed";
      if (r.signal) std::cerr << " (signal " << r.signal << ")";
      if (!r.status.empty()) std::cerr << ": " << r.status;
      std::cerr << '\n';
    }
  }
  return result.ok() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// cost-report

std::vector<fmi::ChannelProfile> profiles_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fmi::FmiError(fmi::ErrorKind::ProtocolViolation, "cannot open " + path);
  const auto doc = nlohmann::json::parse(in);
  fmi::PriceComponents prices = fmi::table3_prices();
  if (doc.contains("prices")) {
    const auto& p = doc["prices"];
    prices.p_faas = p.value("p_faas", prices.p_faas);
    prices.p_hps = p.value("p_hps", prices.p_hps);
    prices.p_redis = p.value("p_redis", prices.p_redis);
    prices.p_s3_d = p.value("p_s3_d", prices.p_s3_d);
    prices.p_s3_u = p.value("p_s3_u", prices.p_s3_u);
    prices.p_ddb_d = p.value("p_ddb_d", prices.p_ddb_d);
    prices.p_ddb_u = p.value("p_ddb_u", prices.p_ddb_u);
  }
  std::vector<fmi::ChannelProfile> out;
  for (const auto& j : doc.at("profiles")) {
    auto p = fmi::table2_profile(fmi::parse_channel_kind(j.at("kind").get<std::string>()));
    p.preset = j.value("preset", p.preset + "-custom");
    p.alpha = j.value("alpha_ms", p.alpha * 1e3) / 1e3;
    p.beta_inv = j.value("beta_inv_mb_per_s", p.beta_inv / 1e6) * 1e6;
    p.price = prices;
    fmi::validate(p);
    out.push_back(std::move(p));
  }
  return out;
}

int cost_report(std::uint64_t size, int participants, double memory_gib, std::uint64_t reps,
                const std::string& preset, const std::string& profiles_file, const std::string& out_path) {
  std::vector<fmi::ChannelProfile> profiles;
  if (preset == "table2") {
    profiles = {fmi::table2_profile(fmi::ChannelKind::s3), fmi::s3_table4_derived_profile(),
                fmi::table2_profile(fmi::ChannelKind::dynamodb), fmi::table2_profile(fmi::ChannelKind::redis),
                fmi::table2_profile(fmi::ChannelKind::direct)};
  } else if (preset == "custom") {
    if (profiles_file.empty()) throw fmi::FmiError(fmi::ErrorKind::ProtocolViolation, "--profiles required");
    profiles = profiles_from_json(profiles_file);
  } else {
    throw fmi::FmiError(fmi::ErrorKind::ProtocolViolation, "unknown preset '" + preset + "'");
  }

  std::vector<fmi::perfmodel::CostReport> rows;
  for (const auto& p : profiles) {
    rows.push_back(fmi::perfmodel::exchange_report({participants, memory_gib, size, reps, p}));
  }

  auto write_csv = [&](std::ostream& o) {
    o << "channel,preset,time_ms,faas_cost_usd,channel_cost_usd,total_cost_usd\n";
    o << std::fixed;
    for (const auto& r : rows) {
      o << r.channel << ',' << r.preset << ',' << std::setprecision(4) << r.time_per_exchange * 1e3 << ','
        << std::setprecision(6) << r.faas_cost.dollars() << ',' << r.channel_cost.dollars() << ','
        << r.total_cost.dollars() << '\n';
    }
  };

  std::cout << "size=" << size << " B  P=" << participants << "  M=" << memory_gib << " GiB  reps=" << reps << '\n';
  std::cout << std::left << std::setw(10) << "channel" << std::setw(20) << "preset" << std::right << std::setw(12)
            << "time_ms" << std::setw(14) << "faas_usd" << std::setw(14) << "channel_usd" << std::setw(14)
            << "total_usd" << '\n'
            << std::fixed;
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(10) << r.channel << std::setw(20) << r.preset << std::right
              << std::setprecision(2) << std::setw(12) << r.time_per_exchange * 1e3 << std::setw(14)
              << r.faas_cost.dollars() << std::setw(14) << r.channel_cost.dollars() << std::setw(14)
              << r.total_cost.dollars() << '\n';
  }
  std::cout << std::defaultfloat << "\ncsv:\n";
  write_csv(std::cout);
  if (!out_path.empty()) {
    std::ofstream o(out_path);
    write_csv(o);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serverless message passing benchmarks on a local fleet of worker processes."};
  app.require_subcommand(1);

  RunArgs pp, otm, coll, ver;
  auto* pingpong = app.add_subcommand("pingpong", "half round trip between two workers");
  add_run_options(pingpong, pp);

  auto* one_to_many = app.add_subcommand("one-to-many", "one producer sends to K receivers");
  add_run_options(one_to_many, otm);
  one_to_many->add_option("--receivers", otm.receivers, "number of receivers K")->required();

  auto* collective = app.add_subcommand("collective", "barrier then a timed collective, max across workers");
  add_run_options(collective, coll);
  collective->add_option("--collective", coll.collective, "bcast, barrier, gather, scatter, reduce, allreduce, scan")
      ->capture_default_str();

  auto* verify = app.add_subcommand("verify", "random collectives checked bitwise against the serial reference");
  add_run_options(verify, ver);
  verify->add_option("--trials", ver.trials, "trials per collective")->capture_default_str();
  verify->add_option("--seed", ver.seed)->capture_default_str();

  std::uint64_t c_size = 1'000'000, c_reps = 1'000'000;
  int c_participants = 2;
  double c_memory = 2;
  std::string c_preset = "table2", c_profiles, c_out;
  auto* cost = app.add_subcommand("cost-report", "alpha-beta time and dollar cost per channel");
  cost->add_option("--size", c_size, "bytes per exchange")->capture_default_str();
  cost->add_option("--participants", c_participants, "P")->capture_default_str();
  cost->add_option("--memory-gib", c_memory, "M, GiB per participant")->capture_default_str();
  cost->add_option("--reps", c_reps, "number of exchanges")->capture_default_str();
  cost->add_option("--preset", c_preset, "table2 or custom")->capture_default_str();
  cost->add_option("--profiles", c_profiles, "JSON profile file for --preset custom");
  cost->add_option("--out", c_out, "write the CSV table here");

  fmi::bench::WorkerOptions w;
  std::string w_bench = "pingpong", w_collective = "allreduce", w_samples, w_status;
  auto* worker = app.add_subcommand("worker", "")->group("");
  worker->add_option("--bench", w_bench);
  worker->add_option("--collective", w_collective);
  worker->add_option("--world-size", w.spec.world_size);
  worker->add_option("--size", w.spec.size_bytes);
  worker->add_option("--reps", w.spec.reps);
  worker->add_option("--warmups", w.spec.warmups);
  worker->add_option("--trials", w.spec.trials);
  worker->add_option("--seed", w.spec.seed);
  worker->add_option("--samples-out", w_samples);
  worker->add_option("--status-out", w_status);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*worker) {
      w.spec.kind = fmi::bench::parse_bench_kind(w_bench);
      w.spec.collective = fmi::collectives::parse_collective(w_collective);
      if (const char* ch = std::getenv("FMI_CHANNEL")) w.spec.channel = fmi::parse_channel_kind(ch);
      w.samples_out = w_samples;
      w.status_out = w_status;
      return fmi::bench::run_worker(w);
    }
    if (*pingpong) return run_world(BenchKind::pingpong, pp);
    if (*one_to_many) return run_world(BenchKind::one_to_many, otm);
    if (*collective) return run_world(BenchKind::collective, coll);
    if (*verify) return run_world(BenchKind::verify, ver);
    if (*cost) return cost_report(c_size, c_participants, c_memory, c_reps, c_preset, c_profiles, c_out);
  } catch (const fmi::FmiError& e) {
    std::cerr << "fmi-bench: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fmi-bench: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

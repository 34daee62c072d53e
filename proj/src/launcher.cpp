#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "fmi/bench.hpp"
#include "fmi/rendezvous.hpp"

extern char** environ;

namespace fmi::bench {

namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "fmi-world-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) {
      throw FmiError(ErrorKind::ChannelFailure, std::string("mkdtemp: ") + std::strerror(errno));
    }
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Kills and reaps whatever is still running when the launcher unwinds.
struct Children {
  std::vector<pid_t> pids;
  std::vector<bool> reaped;

  ~Children() {
    for (std::size_t i = 0; i < pids.size(); ++i) {
      if (!reaped[i]) {
        ::kill(pids[i], SIGKILL);
        ::waitpid(pids[i], nullptr, 0);
      }
    }
  }
};

std::vector<std::string> child_environment(const BenchmarkSpec& spec, const LaunchOptions& opts, int rank,
                                           const Endpoint& coordinator, const Endpoint& store) {
  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) {
    if (std::strncmp(*e, "FMI_", 4) != 0) env.emplace_back(*e);
  }
  env.push_back("FMI_COMM_NAME=" + opts.comm_name);
  env.push_back("FMI_RANK=" + std::to_string(rank));
  env.push_back("FMI_WORLD_SIZE=" + std::to_string(spec.world_size));
  env.push_back("FMI_CHANNEL=" + std::string(to_string(spec.channel)));
  env.push_back("FMI_COORDINATOR=" + to_string(coordinator));
  env.push_back("FMI_STORE=" + to_string(store));
  env.push_back("FMI_EPOCH=" + std::to_string(opts.epoch));
  env.push_back("FMI_JOIN_TIMEOUT_MS=" + std::to_string(opts.join_timeout.count()));
  env.push_back("FMI_OP_TIMEOUT_MS=" + std::to_string(opts.op_timeout.count()));
  return env;
}

std::vector<std::string> worker_arguments(const BenchmarkSpec& spec, const LaunchOptions& opts,
                                          const fs::path& samples, const fs::path& status) {
  return {opts.worker_binary.string(),
          "worker",
          "--bench",
          std::string(to_string(spec.kind)),
          "--collective",
          std::string(collectives::to_string(spec.collective)),
          "--world-size",
          std::to_string(spec.world_size),
          "--size",
          std::to_string(spec.size_bytes),
          "--reps",
          std::to_string(spec.reps),
          "--warmups",
          std::to_string(spec.warmups),
          "--trials",
          std::to_string(spec.trials),
          "--seed",
          std::to_string(spec.seed),
          "--samples-out",
          samples.string(),
          "--status-out",
          status.string()};
}

std::vector<char*> c_strings(std::vector<std::string>& v) {
  std::vector<char*> out;
  for (auto& s : v) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

std::vector<double> read_samples(const fs::path& p) {
  std::vector<double> out;
  std::ifstream in(p);
  double x;
  while (in >> x) out.push_back(x);
  return out;
}

std::string read_status(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

WorldResult launch_world(const BenchmarkSpec& spec, const LaunchOptions& opts) {
  spec.validate();
  if (opts.worker_binary.empty()) throw FmiError(ErrorKind::ProtocolViolation, "no worker binary given");
  ignore_sigpipe();

  const bool direct = spec.channel == ChannelKind::direct;
  const ChannelProfile profile = opts.store_profile.value_or(table2_profile(spec.channel));
  std::unique_ptr<rendezvous::BackgroundCoordinator> coordinator;
  std::unique_ptr<store::BackgroundStore> store;
  Endpoint coordinator_ep = opts.coordinator;
  Endpoint store_ep = opts.store;
  if (opts.auto_services && spec.world_size > 1) {
    if (direct) {
      rendezvous::Coordinator::Options c;
      c.hold_timeout = opts.join_timeout;
      coordinator = std::make_unique<rendezvous::BackgroundCoordinator>(c);
      coordinator_ep = coordinator->endpoint();
    } else {
      store::StoreServer::Options s;
      s.profile = profile;
      s.latency_scale = opts.latency_scale;
      s.jitter = opts.jitter;
      store = std::make_unique<store::BackgroundStore>(s);
      store_ep = store->endpoint();
    }
  }

  TempDir dir;
  const auto n = static_cast<std::size_t>(spec.world_size);
  Children children;
  std::vector<fs::path> samples_files(n), status_files(n);
  const auto t0 = Clock::now();
  for (int r = 0; r < spec.world_size; ++r) {
    const auto i = static_cast<std::size_t>(r);
    samples_files[i] = dir.path() / ("samples." + std::to_string(r));
    status_files[i] = dir.path() / ("status." + std::to_string(r));
    auto args = worker_arguments(spec, opts, samples_files[i], status_files[i]);
    auto env = child_environment(spec, opts, r, coordinator_ep, store_ep);
    auto argv = c_strings(args);
    auto envp = c_strings(env);
    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), envp.data());
    if (rc != 0) {
      throw FmiError(ErrorKind::ChannelFailure,
                     "spawn " + opts.worker_binary.string() + ": " + std::strerror(rc));
    }
    children.pids.push_back(pid);
    children.reaped.push_back(false);
  }

  WorldResult result;
  result.spec = spec;
  result.preset = direct ? table2_profile(ChannelKind::direct).preset : profile.preset;
  result.ranks.resize(n);
  std::size_t running = n;
  bool killed = false;
  bool timed_out = false;
  while (running > 0) {
    const auto now = Clock::now();
    if (opts.kill_rank && !killed && now - t0 >= opts.kill_after) {
      const auto k = static_cast<std::size_t>(*opts.kill_rank);
      if (k < n && !children.reaped[k]) ::kill(children.pids[k], SIGKILL);
      killed = true;
    }
    if (!timed_out && now - t0 >= opts.world_timeout) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!children.reaped[i]) ::kill(children.pids[i], SIGKILL);
      }
      timed_out = true;
    }
    bool progressed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (children.reaped[i]) continue;
      int st = 0;
      const pid_t got = ::waitpid(children.pids[i], &st, WNOHANG);
      if (got == 0) continue;
      children.reaped[i] = true;
      --running;
      progressed = true;
      auto& o = result.ranks[i];
      o.rank = static_cast<int>(i);
      if (got > 0 && WIFEXITED(st)) {
        o.exit_code = WEXITSTATUS(st);
      } else if (got > 0 && WIFSIGNALED(st)) {
        o.signal = WTERMSIG(st);
      }
    }
    if (!progressed) std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  result.elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

  for (std::size_t i = 0; i < n; ++i) {
    auto& o = result.ranks[i];
    o.rank = static_cast<int>(i);
    o.status = read_status(status_files[i]);
    o.samples = read_samples(samples_files[i]);
    if (!o.ok()) result.failed_ranks.push_back(o.rank);
  }
  for (std::size_t rep = 0;; ++rep) {
    bool any = false;
    double worst = 0;
    for (const auto& o : result.ranks) {
      if (rep < o.samples.size()) {
        worst = any ? std::max(worst, o.samples[rep]) : o.samples[rep];
        any = true;
      }
    }
    if (!any) break;
    result.samples.push_back(worst);
  }
  if (store) {
    result.ledger = store->server().ledger();
    result.metered_cost = store::metered_cost(*result.ledger, profile, result.elapsed);
  }
  return result;
}

std::size_t listening_sockets() {
  std::size_t count = 0;
  for (const char* path : {"/proc/net/tcp", "/proc/net/tcp6"}) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string sl, local, remote, state;
      fields >> sl >> local >> remote >> state;
      if (state == "0A") ++count;
    }
  }
  return count;
}

}  // namespace fmi::bench

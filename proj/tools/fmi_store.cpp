// Standalone store emulator.
#include <csignal>
#include <cstdio>
#include <thread>

#include <CLI11.hpp>

#include "fmi/store.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Key-value store that emulates object storage, NoSQL or an in-memory cache."};
  std::string bind = "0.0.0.0:7001";
  std::string profile_name = "redis";
  bool jitter = false;
  double latency_scale = 1.0;
  std::uint64_t seed = 1;
  app.add_option("--bind", bind, "listen address, a.b.c.d:port")->capture_default_str();
  app.add_option("--profile", profile_name, "s3, s3-table4-derived, dynamodb or redis")->capture_default_str();
  app.add_flag("--jitter", jitter, "add +-10% uniform jitter to injected latency");
  app.add_option("--latency-scale", latency_scale, "multiplier on injected latency, 0 disables it")
      ->capture_default_str();
  app.add_option("--seed", seed, "jitter seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    fmi::ignore_sigpipe();
    fmi::store::StoreServer::Options opts;
    opts.bind = fmi::parse_endpoint(bind);
    opts.profile = profile_name == "s3-table4-derived" ? fmi::s3_table4_derived_profile()
                                                       : fmi::table2_profile(fmi::parse_channel_kind(profile_name));
    if (opts.profile.kind == fmi::ChannelKind::direct) {
      std::fprintf(stderr, "fmi-store: direct is not a store profile\n");
      return 2;
    }
    opts.jitter = jitter;
    opts.latency_scale = latency_scale;
    opts.seed = seed;
    fmi::store::StoreServer server(opts);

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread([set, &server] {
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
    }).detach();

    std::printf("listening on %s profile %s\n", fmi::to_string(server.endpoint()).c_str(),
                opts.profile.preset.c_str());
    std::fflush(stdout);
    server.run();
    const auto l = server.ledger();
    std::printf("writes=%llu reads=%llu deletes=%llu bytes_written=%llu bytes_read=%llu\n",
                static_cast<unsigned long long>(l.writes), static_cast<unsigned long long>(l.reads),
                static_cast<unsigned long long>(l.deletes), static_cast<unsigned long long>(l.bytes_written),
                static_cast<unsigned long long>(l.bytes_read));
  } catch (const fmi::FmiError& e) {
    std::fprintf(stderr, "fmi-store: %s\n", e.what());
    return 1;
  }
  return 0;
}

// Standalone rendezvous coordinator.
#include <csignal>
#include <cstdio>
#include <thread>

#include <CLI11.hpp>

#include "fmi/rendezvous.hpp"

namespace {

// Blocks SIGINT/SIGTERM in every thread and stops the server when one arrives.
template <class Server>
void stop_on_signal(Server& server) {
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
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairs hole-punching clients by name and exchanges their observed endpoints."};
  std::string bind = "0.0.0.0:7000";
  long hold_ms = 30000;
  app.add_option("--bind", bind, "listen address, a.b.c.d:port")->capture_default_str();
  app.add_option("--hold-timeout-ms", hold_ms, "how long an unmatched ticket is parked")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    fmi::ignore_sigpipe();
    fmi::rendezvous::Coordinator coordinator({fmi::parse_endpoint(bind), std::chrono::milliseconds(hold_ms)});
    stop_on_signal(coordinator);
    std::printf("listening on %s\n", fmi::to_string(coordinator.endpoint()).c_str());
    std::fflush(stdout);
    coordinator.run();
    const auto s = coordinator.stats();
    std::printf("completed=%llu timeouts=%llu malformed=%llu abandoned=%llu\n",
                static_cast<unsigned long long>(s.completed), static_cast<unsigned long long>(s.timeouts),
                static_cast<unsigned long long>(s.malformed), static_cast<unsigned long long>(s.abandoned));
  } catch (const fmi::FmiError& e) {
    std::fprintf(stderr, "fmi-rendezvous: %s\n", e.what());
    return 1;
  }
  return 0;
}

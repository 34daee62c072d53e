#include <doctest.h>

#include <future>

#include "fmi/rendezvous.hpp"

using namespace fmi;
using namespace std::chrono_literals;

TEST_CASE("pairing names are order independent") {
  CHECK(rendezvous::pairing_name("job", 3, 1, 2) == "job:1-3:2");
  CHECK(rendezvous::pairing_name("job", 1, 3, 2) == rendezvous::pairing_name("job", 3, 1, 2));
  CHECK(rendezvous::valid_pairing_name("caf\xC3\xA9"));
  CHECK_FALSE(rendezvous::valid_pairing_name("\xC3"));
  CHECK_FALSE(rendezvous::valid_pairing_name(""));
}

TEST_CASE("coordinator_step parks then pairs") {
  rendezvous::CoordinatorState s;
  auto r1 = rendezvous::coordinator_step(s, {"a", Endpoint{{1, 2, 3, 4}, 10}, {}});
  CHECK(std::holds_alternative<rendezvous::Hold>(r1.action));
  CHECK(r1.state.pending.size() == 1);
  auto r2 = rendezvous::coordinator_step(r1.state, {"b", Endpoint{{1, 2, 3, 5}, 11}, {}});
  CHECK(r2.state.pending.size() == 2);
  auto r3 = rendezvous::coordinator_step(r2.state, {"a", Endpoint{{5, 6, 7, 8}, 20}, {}});
  auto* ex = std::get_if<rendezvous::Exchange>(&r3.action);
  REQUIRE(ex != nullptr);
  CHECK(ex->first.observed.port == 10);
  CHECK(ex->second.observed.port == 20);
  CHECK(r3.state.pending.size() == 1);
  CHECK(r3.state.stats.completed == 1);
  CHECK_THROWS_AS(rendezvous::coordinator_step(r3.state, {"", {}, {}}), FmiError);
}

TEST_CASE("two clients learn each other's observed endpoint") {
  rendezvous::BackgroundCoordinator coord;
  auto a = std::async(std::launch::async, [&] { return rendezvous::pair(coord.endpoint(), "x:0-1:0", 5s); });
  auto b = rendezvous::pair(coord.endpoint(), "x:0-1:0", 5s);
  auto ra = a.get();
  CHECK(ra.peer.port == b.local.port);
  CHECK(b.peer.port == ra.local.port);
  CHECK(coord.coordinator().stats().completed == 1);
  CHECK(coord.coordinator().pending() == 0);
}

TEST_CASE("a lone ticket times out at the coordinator") {
  rendezvous::BackgroundCoordinator coord({Endpoint{{127, 0, 0, 1}, 0}, 200ms});
  try {
    rendezvous::pair(coord.endpoint(), "lonely", 5s);
    FAIL("paired with nobody");
  } catch (const FmiError& e) {
    CHECK(e.kind() == ErrorKind::Timeout);
  }
  CHECK(coord.coordinator().stats().timeouts == 1);
}

TEST_CASE("client deadline fires before the hold timeout") {
  rendezvous::BackgroundCoordinator coord;
  const auto t0 = Clock::now();
  CHECK_THROWS_AS(rendezvous::pair(coord.endpoint(), "lonely", 150ms), FmiError);
  CHECK(Clock::now() - t0 < 2s);
}

TEST_CASE("unreachable coordinator is a channel failure") {
  Endpoint dead;
  {
    Socket s = tcp_listen(Endpoint{{127, 0, 0, 1}, 0});
    dead = s.local_endpoint();
  }
  try {
    rendezvous::pair(dead, "n", 1s);
    FAIL("connected to a closed port");
  } catch (const FmiError& e) {
    CHECK(e.kind() == ErrorKind::ChannelFailure);
  }
}

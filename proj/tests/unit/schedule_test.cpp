#include <doctest.h>

#include <algorithm>
#include <set>

#include "fmi/collectives.hpp"

using namespace fmi;
using namespace fmi::collectives;

TEST_CASE("binomial schedule examples") {
  CHECK(binomial_schedule(1, 0).steps.empty());
  const auto s8 = binomial_schedule(8, 0);
  CHECK(s8.steps.size() == 7);
  CHECK(s8.depth() == 3);
  const auto s5 = binomial_schedule(5, 2);
  CHECK(s5.steps.size() == 4);
  CHECK(s5.depth() == 3);
  CHECK_THROWS_AS(binomial_schedule(4, 4), FmiError);
  CHECK_THROWS_AS(binomial_schedule(4, -1), FmiError);
}

TEST_CASE("binomial schedule invariants for every n <= 64 and root") {
  for (int n = 1; n <= 64; ++n) {
    for (int root = 0; root < n; ++root) {
      const auto s = binomial_schedule(n, root);
      CHECK(s.steps.size() == static_cast<std::size_t>(n - 1));
      CHECK(s.depth() == ceil_log2(n));
      std::vector<int> recv_round(static_cast<std::size_t>(n), 0);
      for (const auto& st : s.steps) {
        CHECK(st.receiver != root);
        CHECK(recv_round[static_cast<std::size_t>(st.receiver)] == 0);
        recv_round[static_cast<std::size_t>(st.receiver)] = st.round;
      }
      for (const auto& st : s.steps) {
        if (st.sender != root) CHECK(recv_round[static_cast<std::size_t>(st.sender)] < st.round);
      }
    }
  }
}

TEST_CASE("recursive doubling rounds") {
  CHECK(recursive_doubling_rounds(1).empty());
  for (int n : {2, 4, 8, 16, 32, 64}) {
    const auto rounds = recursive_doubling_rounds(n);
    CHECK(static_cast<int>(rounds.size()) == ceil_log2(n));
    for (std::size_t k = 0; k < rounds.size(); ++k) {
      for (int r = 0; r < n; ++r) {
        const int p = rounds[k].partner[static_cast<std::size_t>(r)];
        CHECK(p == (r ^ (1 << k)));
        CHECK(rounds[k].partner[static_cast<std::size_t>(p)] == r);
      }
    }
  }
  const auto six = recursive_doubling_rounds(6);
  REQUIRE(six.size() == 4);
  CHECK(six.front().phase == RdPhase::fold);
  CHECK(six.back().phase == RdPhase::unfold);
}

TEST_CASE("recursive doubling simulated with sum gives the total everywhere") {
  for (int n = 1; n <= 33; ++n) {
    std::vector<long> v(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) v[static_cast<std::size_t>(r)] = r;
    for (const auto& round : recursive_doubling_rounds(n)) {
      auto next = v;
      for (int r = 0; r < n; ++r) {
        const int p = round.partner[static_cast<std::size_t>(r)];
        if (p < 0) continue;
        const auto mine = v[static_cast<std::size_t>(r)], theirs = v[static_cast<std::size_t>(p)];
        switch (round.phase) {
          case RdPhase::fold: if (r > p) next[static_cast<std::size_t>(r)] = mine + theirs; break;
          case RdPhase::exchange: next[static_cast<std::size_t>(r)] = mine + theirs; break;
          case RdPhase::unfold: if (r < p) next[static_cast<std::size_t>(r)] = theirs; break;
        }
      }
      v = next;
    }
    for (auto x : v) CHECK(x == static_cast<long>(n) * (n - 1) / 2);
  }
}

TEST_CASE("required peers are symmetric and cover the schedules") {
  for (int n = 1; n <= 20; ++n) {
    std::vector<std::set<int>> peers(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
      for (int p : required_peers(n, r)) peers[static_cast<std::size_t>(r)].insert(p);
    }
    for (int r = 0; r < n; ++r) {
      for (int p : peers[static_cast<std::size_t>(r)]) CHECK(peers[static_cast<std::size_t>(p)].count(r) == 1);
    }
    for (int root = 0; root < n; ++root) {
      for (const auto& st : binomial_schedule(n, root).steps) {
        CHECK(peers[static_cast<std::size_t>(st.sender)].count(st.receiver) == 1);
      }
    }
  }
}

TEST_CASE("tags separate operations, kinds and rounds") {
  std::set<std::uint16_t> seen;
  for (std::uint32_t op = 0; op < 4; ++op) {
    for (auto k : kAllCollectives) {
      for (int round = 0; round < 32; ++round) CHECK(seen.insert(make_tag(op, k, round)).second);
    }
  }
  CHECK(mediated_prefix("job", 2, 9) == "job/2/9/");
}

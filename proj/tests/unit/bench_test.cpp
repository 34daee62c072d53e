#include <doctest.h>

#include <sstream>

#include "fmi/bench.hpp"

using namespace fmi;
using namespace fmi::bench;

TEST_CASE("summary statistics") {
  const std::vector<double> s{5, 1, 4, 2, 3};
  const auto m = summarize(s);
  CHECK(m.median == 3);
  CHECK(m.mean == doctest::Approx(3));
  CHECK(m.max == 5);
  CHECK(m.p95 == 5);
  const std::vector<double> even{1, 2, 3, 4};
  CHECK(summarize(even).median == doctest::Approx(2.5));
  std::vector<double> hundred;
  for (int i = 1; i <= 100; ++i) hundred.push_back(i);
  CHECK(summarize(hundred).p95 == 95);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), FmiError);
}

TEST_CASE("benchmark parameter validation") {
  BenchmarkSpec s;
  CHECK_NOTHROW(s.validate());
  s.world_size = 3;
  CHECK_THROWS_AS(s.validate(), FmiError);  // ping-pong is two ranks
  s = {};
  s.reps = 0;
  CHECK_THROWS_AS(s.validate(), FmiError);
  s = {};
  s.size_bytes = 0;
  CHECK_THROWS_AS(s.validate(), FmiError);
  CHECK(parse_bench_kind("one-to-many") == BenchKind::one_to_many);
  CHECK_THROWS_AS(parse_bench_kind("nope"), FmiError);
}

TEST_CASE("collective payload sizes") {
  using collectives::CollectiveKind;
  CHECK(collective_payload_bytes(CollectiveKind::allreduce, 8) == 4);
  CHECK(collective_payload_bytes(CollectiveKind::gather, 8) == 625 * 4);
  CHECK(collective_payload_bytes(CollectiveKind::scatter, 16) == 312 * 4);
}

TEST_CASE("affine op composes maps in order") {
  const auto op = affine_op();
  CHECK_FALSE(op.commutative());
  auto pack = [](std::uint32_t a, std::uint32_t b) {
    return static_cast<std::int64_t>((static_cast<std::uint64_t>(a) << 32) | b);
  };
  // x -> 2x+1 then x -> 3x+5 is x -> 6x+8
  const auto r = apply_reduce(op, buffer_of(std::vector<std::int64_t>{pack(2, 1)}),
                              buffer_of(std::vector<std::int64_t>{pack(3, 5)}));
  CHECK(unpack<std::int64_t>(r) == std::vector<std::int64_t>{pack(6, 8)});
}

TEST_CASE("CSV report layout") {
  WorldResult w;
  w.spec.kind = BenchKind::pingpong;
  w.spec.channel = ChannelKind::redis;
  w.spec.size_bytes = 1000;
  w.samples = {0.01, 0.02};
  w.metered_cost = Money::from_dollars(0.5);
  std::ostringstream out;
  emit_report(std::span<const WorldResult>(&w, 1), ReportFormat::csv, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "benchmark,channel,world_size,size_bytes,rep,seconds");
  std::getline(in, line);
  CHECK(line.rfind("pingpong,redis,2,1000,0,", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("pingpong,redis,2,1000,1,", 0) == 0);
  int footers = 0;
  while (std::getline(in, line)) {
    CHECK(line.rfind("# summary", 0) == 0);
    ++footers;
  }
  CHECK(footers >= 1);
  CHECK(out.str().find("metered_cost_usd") != std::string::npos);
}

TEST_CASE("launched world runs ping-pong over direct and redis") {
  LaunchOptions opts;
  opts.worker_binary = FMI_BENCH_BINARY;
  opts.latency_scale = 0;
  opts.world_timeout = std::chrono::seconds(60);
  for (auto ch : {ChannelKind::direct, ChannelKind::redis}) {
    BenchmarkSpec s;
    s.channel = ch;
    s.size_bytes = 1000;
    s.reps = 10;
    const auto w = launch_world(s, opts);
    CHECK(w.ok());
    CHECK(w.samples.size() == 10);
    CHECK(w.metered_cost.has_value() == (ch != ChannelKind::direct));
  }
}

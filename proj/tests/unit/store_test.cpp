#include <doctest.h>

#include <future>

#include "fmi/store.hpp"

using namespace fmi;
using namespace std::chrono_literals;

namespace {
Bytes bytes_of(std::string_view s) {
  Bytes b;
  for (char c : s) b.push_back(static_cast<std::byte>(c));
  return b;
}

store::StoreServer::Options instant(ChannelKind kind = ChannelKind::redis) {
  store::StoreServer::Options o;
  o.profile = table2_profile(kind);
  o.latency_scale = 0;
  return o;
}

// In-memory store that misses a fixed number of times before a key appears.
class FlakyStore final : public store::KvStore {
 public:
  explicit FlakyStore(int misses) : misses_(misses) {}
  void put(std::string_view, std::span<const std::byte>) override {}
  std::optional<Bytes> get(std::string_view) override {
    ++reads;
    if (reads <= misses_) return std::nullopt;
    return bytes_of("v");
  }
  std::uint32_t list_count(std::string_view) override { return 0; }
  void remove(std::string_view) override {}
  int reads = 0;

 private:
  int misses_;
};
}  // namespace

TEST_CASE("backoff schedule") {
  CHECK(store::backoff_delay(1) == 1ms);
  CHECK(store::backoff_delay(100) == 100ms);
  CHECK(store::backoff_delay(101) == 202ms);
  CHECK(store::backoff_delay(500) == 1000ms);
  CHECK_THROWS_AS(store::backoff_delay(0), FmiError);
  try {
    store::backoff_delay(501);
    FAIL("attempt 501 allowed");
  } catch (const FmiError& e) {
    CHECK(e.kind() == ErrorKind::RetriesExhausted);
  }
  CHECK(store::worst_case_sleep({}) == 245450ms);
}

TEST_CASE("get_poll sleeps the backoff schedule, floored") {
  FlakyStore s(3);
  std::vector<std::chrono::nanoseconds> slept;
  store::PollOptions opts;
  opts.sleep = [&](std::chrono::nanoseconds d) { slept.push_back(d); };
  CHECK(store::get_poll(s, "k", opts) == bytes_of("v"));
  CHECK(slept == std::vector<std::chrono::nanoseconds>{1ms, 2ms, 3ms});

  FlakyStore s2(2);
  slept.clear();
  opts.floor = 20ms;
  store::get_poll(s2, "k", opts);
  CHECK(slept == std::vector<std::chrono::nanoseconds>{20ms, 20ms});
}

TEST_CASE("get_poll gives up after 500 reads or at the deadline") {
  FlakyStore never(1 << 30);
  store::PollOptions opts;
  opts.sleep = [](std::chrono::nanoseconds) {};
  try {
    store::get_poll(never, "k", opts);
    FAIL("no exhaustion");
  } catch (const FmiError& e) {
    CHECK(e.kind() == ErrorKind::RetriesExhausted);
  }
  CHECK(never.reads == 500);

  FlakyStore never2(1 << 30);
  store::PollOptions timed;
  timed.deadline = deadline_after(50ms);
  try {
    store::get_poll(never2, "k", timed);
    FAIL("no timeout");
  } catch (const FmiError& e) {
    CHECK(e.kind() == ErrorKind::Timeout);
  }
}

TEST_CASE("dynamo units round up per request") {
  CHECK(store::dynamo_units(0) == 1);
  CHECK(store::dynamo_units(1) == 1);
  CHECK(store::dynamo_units(1000) == 1);
  CHECK(store::dynamo_units(1001) == 2);
  CHECK(store::dynamo_units(1'000'000) == 1000);
}

TEST_CASE("store server put/get/list/delete over TCP") {
  store::BackgroundStore srv(instant());
  store::StoreClient c(srv.endpoint());
  CHECK_FALSE(c.get("a/1").has_value());
  c.put("a/1", bytes_of("x"));
  c.put("a/2", bytes_of("yy"));
  c.put("b/1", {});
  CHECK(c.get("a/1") == bytes_of("x"));
  CHECK(c.get("b/1") == Bytes{});
  CHECK(c.list_count("a/") == 2);
  CHECK(c.list_count("") == 3);
  c.remove("a/1");
  c.remove("missing");
  CHECK(c.list_count("a/") == 1);
  CHECK(srv.server().size() == 2);

  const auto l = srv.server().ledger();
  CHECK(l.writes == 3);
  CHECK(l.reads == 6);  // 3 gets + 3 list counts
  CHECK(l.deletes == 2);
  CHECK(l.bytes_written == 3);
  CHECK(l.bytes_read == 1);
}

TEST_CASE("values above the profile limit are rejected") {
  store::BackgroundStore srv(instant(ChannelKind::dynamodb));
  store::StoreClient c(srv.endpoint());
  c.put("ok", Bytes(400'000));
  try {
    c.put("big", Bytes(400'001));
    FAIL("accepted oversized value");
  } catch (const FmiError& e) {
    CHECK(e.kind() == ErrorKind::MessageTooLarge);
  }
  CHECK(c.get("ok")->size() == 400'000);  // connection still usable
  CHECK_FALSE(c.get("big").has_value());
}

TEST_CASE("injected latency follows alpha + len / beta") {
  store::StoreServer::Options o;
  o.profile = table2_profile(ChannelKind::s3);
  store::StoreServer srv(o);
  CHECK(srv.service_delay(0) == std::chrono::nanoseconds(14'700'000));
  CHECK(srv.service_delay(1'000'000) == std::chrono::nanoseconds(34'700'000));

  store::BackgroundStore timed(o);
  store::StoreClient c(timed.endpoint());
  const auto t0 = Clock::now();
  c.put("k", bytes_of("v"));
  CHECK(Clock::now() - t0 >= 14ms);
}

TEST_CASE("metered cost follows each channel's pricing") {
  store::MeterLedger l;
  l.record_write(1500);
  l.record_read(1500);
  l.record_read(10);
  CHECK(l.write_units == 2);
  CHECK(l.read_units == 3);
  const auto p = table3_prices();
  CHECK(store::metered_cost(l, table2_profile(ChannelKind::s3), 0).nano ==
        Money::from_dollars(p.p_s3_u + 2 * static_cast<long double>(p.p_s3_d)).nano);
  CHECK(store::metered_cost(l, table2_profile(ChannelKind::dynamodb), 0).nano ==
        Money::from_dollars(2 * static_cast<long double>(p.p_ddb_u) + 3 * static_cast<long double>(p.p_ddb_d)).nano);
  CHECK(store::metered_cost(l, table2_profile(ChannelKind::redis), 100).nano ==
        Money::from_dollars(100 * static_cast<long double>(p.p_redis)).nano);
}

TEST_CASE("many concurrent clients") {
  store::BackgroundStore srv(instant());
  std::vector<std::future<void>> fs;
  for (int i = 0; i < 32; ++i) {
    fs.push_back(std::async(std::launch::async, [&, i] {
      store::StoreClient c(srv.endpoint());
      for (int j = 0; j < 20; ++j) c.put("k/" + std::to_string(i) + "/" + std::to_string(j), bytes_of("v"));
    }));
  }
  for (auto& f : fs) f.get();
  store::StoreClient c(srv.endpoint());
  CHECK(c.list_count("k/") == 640);
}

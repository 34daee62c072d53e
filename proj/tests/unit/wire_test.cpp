#include <doctest.h>

#include <random>

#include "fmi/direct_channel.hpp"
#include "fmi/rendezvous.hpp"
#include "fmi/store.hpp"
#include "fmi/wire.hpp"

using namespace fmi;

namespace {
Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::byte>(rng());
  return b;
}
}  // namespace

TEST_CASE("frame header layout") {
  const auto h = direct::encode_header({0x01020304, 0xBEEF, 5});
  CHECK(h[0] == std::byte{'F'});
  CHECK(h[1] == std::byte{'M'});
  CHECK(h[2] == std::byte{0x04});
  CHECK(h[6] == std::byte{0xEF});
  CHECK(h[8] == std::byte{5});
  auto bad = h;
  bad[0] = std::byte{'X'};
  CHECK_THROWS_AS(direct::decode_header(bad), FmiError);
}

TEST_CASE("frames round-trip and reject length mismatches") {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 15u, 16u, 4096u, 65537u}) {
    direct::Frame f{static_cast<std::uint32_t>(rng()), static_cast<std::uint16_t>(rng()), random_bytes(rng, n)};
    auto raw = direct::encode_frame(f);
    CHECK(raw.size() == direct::kFrameHeaderSize + n);
    CHECK(direct::decode_frame(raw) == f);
    raw.push_back(std::byte{0});
    CHECK_THROWS_AS(direct::decode_frame(raw), FmiError);
  }
  CHECK_THROWS_AS(direct::decode_frame(Bytes(3)), FmiError);
}

TEST_CASE("rendezvous request and response round-trip") {
  CHECK(rendezvous::decode_request(rendezvous::encode_request("job:0-1:0")) == "job:0-1:0");
  const std::string longest(255, 'n');
  CHECK(rendezvous::decode_request(rendezvous::encode_request(longest)) == longest);
  CHECK_THROWS_AS(rendezvous::encode_request(""), FmiError);
  CHECK_THROWS_AS(rendezvous::encode_request(std::string(256, 'n')), FmiError);
  CHECK_THROWS_AS(rendezvous::decode_request(Bytes{std::byte{3}, std::byte{'a'}}), FmiError);
  Bytes bad_utf8{std::byte{1}, std::byte{0xFF}};
  CHECK_THROWS_AS(rendezvous::decode_request(bad_utf8), FmiError);

  rendezvous::Response ok{rendezvous::Status::ok, Endpoint{{10, 0, 0, 7}, 65535}};
  CHECK(rendezvous::decode_response(rendezvous::encode_response(ok)) == ok);
  rendezvous::Response late{rendezvous::Status::timeout, {}};
  CHECK(rendezvous::decode_response(rendezvous::encode_response(late)).status == rendezvous::Status::timeout);
}

TEST_CASE("store request and reply round-trip") {
  std::mt19937_64 rng(2);
  for (std::size_t n : {0u, 1u, 1000u, 400000u}) {
    store::Request put{store::Opcode::put, "k/" + std::to_string(n), random_bytes(rng, n)};
    CHECK(store::decode_request(store::encode_request(put)) == put);
    store::Reply got{store::Status::ok, random_bytes(rng, n), 0};
    CHECK(store::decode_reply(store::Opcode::get, store::encode_reply(store::Opcode::get, got)) == got);
  }
  store::Request list{store::Opcode::list_count, "prefix/", {}};
  CHECK(store::decode_request(store::encode_request(list)) == list);
  store::Reply count{store::Status::ok, {}, 123456};
  CHECK(store::decode_reply(store::Opcode::list_count, store::encode_reply(store::Opcode::list_count, count)) ==
        count);
  auto raw = store::encode_request(list);
  raw[0] = std::byte{9};
  CHECK_THROWS_AS(store::decode_request(raw), FmiError);
}

TEST_CASE("length fields beyond 4 GiB encode in eight bytes") {
  const std::uint64_t huge = (std::uint64_t{5} << 32) + 17;
  const auto h = direct::encode_header({0, 0, huge});
  CHECK(direct::decode_header(h).payload_len == huge);
  const auto req = store::encode_request_header(store::Opcode::put, "k", huge);
  CHECK(req.size() == 1 + 4 + 1 + 8);
  wire::Reader r(std::span<const std::byte>(req).subspan(6));
  CHECK(r.u64() == huge);
}

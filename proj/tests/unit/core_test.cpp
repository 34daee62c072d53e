#include <doctest.h>

#include <random>

#include "fmi/bench.hpp"
#include "fmi/core.hpp"

using namespace fmi;

TEST_CASE("apply_reduce element-wise examples") {
  CHECK(unpack<std::int32_t>(apply_reduce(ReductionOp::sum(), buffer_of<std::int32_t>({1, 2, 3}),
                                          buffer_of<std::int32_t>({10, 20, 30}))) ==
        std::vector<std::int32_t>{11, 22, 33});
  CHECK(unpack<std::int32_t>(apply_reduce(ReductionOp::sum(), buffer_of<std::int32_t>({0, 0}),
                                          buffer_of<std::int32_t>({5, 7}))) == std::vector<std::int32_t>{5, 7});
  CHECK(unpack<std::int32_t>(apply_reduce(ReductionOp::max(), buffer_of<std::int32_t>({3, 9}),
                                          buffer_of<std::int32_t>({8, 1}))) == std::vector<std::int32_t>{8, 9});
  CHECK(unpack<double>(apply_reduce(ReductionOp::min(), buffer_of<double>({1.5, -2}), buffer_of<double>({0.5, 4}))) ==
        std::vector<double>{0.5, -2});
  CHECK(unpack<std::int64_t>(apply_reduce(ReductionOp::prod(), buffer_of<std::int64_t>({3, -2}),
                                          buffer_of<std::int64_t>({4, 5}))) == std::vector<std::int64_t>{12, -10});
}

TEST_CASE("apply_reduce rejects mismatched buffers") {
  auto expect_violation = [](auto&& f) {
    try {
      f();
      FAIL("no exception");
    } catch (const FmiError& e) {
      CHECK(e.kind() == ErrorKind::ProtocolViolation);
    }
  };
  expect_violation([] { apply_reduce(ReductionOp::sum(), buffer_of<std::int32_t>({1}), buffer_of<std::int64_t>({1})); });
  expect_violation([] { apply_reduce(ReductionOp::sum(), buffer_of<std::int32_t>({1}), buffer_of<std::int32_t>({1, 2})); });
}

TEST_CASE("integer sum and prod wrap instead of overflowing") {
  const auto big = std::numeric_limits<std::int32_t>::max();
  CHECK(unpack<std::int32_t>(apply_reduce(ReductionOp::sum(), buffer_of<std::int32_t>({big}),
                                          buffer_of<std::int32_t>({1})))[0] == std::numeric_limits<std::int32_t>::min());
}

TEST_CASE("buffer invariants") {
  CHECK(Datatype(TypeKind::int32).width() == 4);
  CHECK(Datatype(TypeKind::int64).width() == 8);
  CHECK(Datatype(TypeKind::float64).width() == 8);
  CHECK(Datatype(TypeKind::byte).width() == 1);
  const auto b = buffer_of<std::int32_t>({1, 2, 3});
  CHECK(b.count() == 3);
  CHECK(b.size_bytes() == 12);
  CHECK(static_cast<int>(b.bytes()[4]) == 2);  // little-endian
  CHECK_THROWS_AS(DataBuffer(Datatype(TypeKind::int64), Bytes(7)), FmiError);
  CHECK_THROWS_AS(unpack<double>(b), FmiError);
}

TEST_CASE("error text carries the kind") {
  FmiError e(ErrorKind::Timeout, "late");
  CHECK(std::string(e.what()) == "Timeout: late");
  CHECK(e.detail() == "late");
}

TEST_CASE("built-in and custom ops are associative; commutative ones commute") {
  std::mt19937_64 rng(5);
  std::vector<ReductionOp> ops = {ReductionOp::sum(), ReductionOp::prod(), ReductionOp::min(), ReductionOp::max(),
                                  ReductionOp::noop(), bench::affine_op()};
  for (const auto& op : ops) {
    for (int i = 0; i < 200; ++i) {
      auto v = [&] { return buffer_of<std::int64_t>({static_cast<std::int64_t>(rng())}); };
      auto a = v(), b = v(), c = v();
      CAPTURE(op.name());
      CHECK(apply_reduce(op, apply_reduce(op, a, b), c) == apply_reduce(op, a, apply_reduce(op, b, c)));
      if (op.commutative()) CHECK(apply_reduce(op, a, b) == apply_reduce(op, b, a));
    }
  }
  CHECK_FALSE(bench::affine_op().commutative());
  auto f = buffer_of<std::int64_t>({(std::int64_t{2} << 32) | 1});  // 2x + 1
  auto g = buffer_of<std::int64_t>({(std::int64_t{3} << 32) | 0});  // 3x
  CHECK_FALSE(apply_reduce(bench::affine_op(), f, g) == apply_reduce(bench::affine_op(), g, f));
}

#include <algorithm>

#include "fmi/collectives.hpp"

namespace fmi::collectives::direct {

namespace {

int highbit(int v) noexcept {
  int h = 1;
  while (h * 2 <= v) h *= 2;
  return h;
}

int log2_exact(int pow2) noexcept {
  int k = 0;
  while ((1 << k) < pow2) ++k;
  return k;
}

// Round-field offsets for algorithms with more than one phase.
constexpr int kDownSweep = 16;
constexpr int kForward = 31;

void check_root(const DirectContext& ctx, int root) { binomial_schedule(ctx.size, root); }

DataBuffer received(Datatype dtype, Bytes bytes) { return DataBuffer(dtype, std::move(bytes)); }

// Lower rank sends first, higher rank receives first, so two large messages
// never wait on each other's socket buffers.
Bytes swap_with(const DirectContext& ctx, int peer, std::uint16_t tag, std::span<const std::byte> mine) {
  if (ctx.rank < peer) {
    ctx.net.send(peer, tag, mine);
    return ctx.net.recv(peer, tag);
  }
  Bytes theirs = ctx.net.recv(peer, tag);
  ctx.net.send(peer, tag, mine);
  return theirs;
}

DataBuffer recursive_doubling(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op,
                              CollectiveKind kind) {
  DataBuffer acc = buf;
  int round = 0;
  for (const auto& r : recursive_doubling_rounds(ctx.size)) {
    ++round;
    const int peer = r.partner[static_cast<std::size_t>(ctx.rank)];
    if (peer < 0) continue;
    const auto tag = make_tag(ctx.op_seq, kind, round);
    switch (r.phase) {
      case RdPhase::fold:
        if (ctx.rank < peer) {
          ctx.net.send(peer, tag, acc.bytes());
        } else {
          acc = apply_reduce(op, received(buf.dtype(), ctx.net.recv(peer, tag)), acc);
        }
        break;
      case RdPhase::exchange: {
        auto other = received(buf.dtype(), swap_with(ctx, peer, tag, acc.bytes()));
        acc = ctx.rank < peer ? apply_reduce(op, acc, other) : apply_reduce(op, other, acc);
        break;
      }
      case RdPhase::unfold:
        if (ctx.rank > peer) {
          ctx.net.send(peer, tag, acc.bytes());
        } else {
          acc = received(buf.dtype(), ctx.net.recv(peer, tag));
        }
        break;
    }
  }
  return acc;
}

// Binomial reduction towards relative rank 0. Each rank's accumulator covers
// a contiguous block of relative ranks starting at its own, so folding the
// child's block on the right keeps relative-rank order.
DataBuffer tree_reduce(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op, int root) {
  const int n = ctx.size;
  const int vr = (ctx.rank - root + n) % n;
  auto real = [&](int v) { return (v + root) % n; };
  DataBuffer acc = buf;
  for (int mask = 1; mask < n; mask <<= 1) {
    const auto tag = make_tag(ctx.op_seq, CollectiveKind::reduce, log2_exact(mask) + 1);
    if (vr & mask) {
      ctx.net.send(real(vr - mask), tag, acc.bytes());
      return DataBuffer(buf.dtype());
    }
    if (vr + mask < n) acc = apply_reduce(op, acc, received(buf.dtype(), ctx.net.recv(real(vr + mask), tag)));
  }
  return acc;
}

}  // namespace

DataBuffer bcast(const DirectContext& ctx, const DataBuffer& buf, int root) {
  check_root(ctx, root);
  const int n = ctx.size;
  if (n == 1) return buf;
  const int vr = (ctx.rank - root + n) % n;
  auto real = [&](int v) { return (v + root) % n; };

  Bytes data;
  int mask = 1;
  if (vr == 0) {
    data.assign(buf.bytes().begin(), buf.bytes().end());
  } else {
    const int h = highbit(vr);
    data = ctx.net.recv(real(vr - h), make_tag(ctx.op_seq, CollectiveKind::bcast, log2_exact(h) + 1));
    mask = h * 2;
  }
  for (; mask < n; mask <<= 1) {
    if (vr + mask < n) {
      ctx.net.send(real(vr + mask), make_tag(ctx.op_seq, CollectiveKind::bcast, log2_exact(mask) + 1), data);
    }
  }
  return received(buf.dtype(), std::move(data));
}

void barrier(const DirectContext& ctx) {
  if (ctx.size == 1) return;
  const auto one = buffer_of<std::uint8_t>({1});
  recursive_doubling(ctx, one, ReductionOp::noop(), CollectiveKind::barrier);
}

DataBuffer gather(const DirectContext& ctx, const DataBuffer& buf, int root) {
  check_root(ctx, root);
  const int n = ctx.size;
  if (n == 1) return buf;
  const int vr = (ctx.rank - root + n) % n;
  auto real = [&](int v) { return (v + root) % n; };
  const std::size_t block = buf.size_bytes();

  // acc holds blocks for relative ranks [vr, vr + blocks).
  Bytes acc(buf.bytes().begin(), buf.bytes().end());
  for (int mask = 1; mask < n; mask <<= 1) {
    const auto tag = make_tag(ctx.op_seq, CollectiveKind::gather, log2_exact(mask) + 1);
    if (vr & mask) {
      ctx.net.send(real(vr - mask), tag, acc);
      return DataBuffer(buf.dtype());
    }
    if (vr + mask < n) {
      auto child = ctx.net.recv(real(vr + mask), tag);
      const auto expected_blocks = static_cast<std::size_t>(std::min(mask, n - vr - mask));
      if (child.size() != expected_blocks * block) {
        throw FmiError(ErrorKind::ProtocolViolation, "gather contributions differ in size");
      }
      acc.insert(acc.end(), child.begin(), child.end());
    }
  }
  // Relative-rank order -> rank order.
  Bytes out(acc.size());
  for (int v = 0; v < n; ++v) {
    std::copy_n(acc.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(v) * block),
                static_cast<std::ptrdiff_t>(block),
                out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(real(v)) * block));
  }
  return received(buf.dtype(), std::move(out));
}

DataBuffer scatter(const DirectContext& ctx, const DataBuffer& buf, int root) {
  check_root(ctx, root);
  const int n = ctx.size;
  if (ctx.rank == root && buf.count() % static_cast<std::size_t>(n) != 0) {
    throw FmiError(ErrorKind::ProtocolViolation, "scatter of " + std::to_string(buf.count()) +
                                                     " elements over " + std::to_string(n) + " ranks");
  }
  if (n == 1) return buf;
  const int vr = (ctx.rank - root + n) % n;
  auto real = [&](int v) { return (v + root) % n; };

  // data holds blocks for relative ranks [vr, vr + span).
  Bytes data;
  int span;
  int mask;
  if (vr == 0) {
    const std::size_t block = buf.size_bytes() / static_cast<std::size_t>(n);
    data.resize(buf.size_bytes());
    for (int v = 0; v < n; ++v) {
      std::copy_n(buf.bytes().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(real(v)) * block),
                  static_cast<std::ptrdiff_t>(block),
                  data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(v) * block));
    }
    span = n;
    mask = highbit(n - 1);
  } else {
    // Same tree as gather: the parent clears the lowest set bit.
    const int h = vr & -vr;
    data = ctx.net.recv(real(vr - h), make_tag(ctx.op_seq, CollectiveKind::scatter, log2_exact(h) + 1));
    span = std::min(h, n - vr);
    mask = h / 2;
  }
  if (data.size() % static_cast<std::size_t>(span) != 0) {
    throw FmiError(ErrorKind::ProtocolViolation, "scatter block of unexpected size");
  }
  const std::size_t block = data.size() / static_cast<std::size_t>(span);
  for (; mask >= 1; mask >>= 1) {
    if (vr + mask >= n) continue;
    const int child_span = std::min(mask, n - vr - mask);
    auto first = data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(mask) * block);
    std::span<const std::byte> part(&*first, static_cast<std::size_t>(child_span) * block);
    ctx.net.send(real(vr + mask), make_tag(ctx.op_seq, CollectiveKind::scatter, log2_exact(mask) + 1), part);
  }
  data.resize(block);
  return received(buf.dtype(), std::move(data));
}

DataBuffer reduce(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op, int root) {
  check_root(ctx, root);
  if (ctx.size == 1) return buf;
  if (op.commutative() || root == 0) return tree_reduce(ctx, buf, op, root);

  // Non-commutative with a non-zero root: reduce at rank 0 in rank order,
  // then forward down the root's ancestor chain in the rank-0 tree.
  DataBuffer acc = tree_reduce(ctx, buf, op, 0);
  std::vector<int> chain{root};  // root, parent(root), ..., 0
  while (chain.back() != 0) chain.push_back(chain.back() - highbit(chain.back()));
  const auto pos = std::find(chain.begin(), chain.end(), ctx.rank);
  if (pos == chain.end()) return DataBuffer(buf.dtype());
  const auto tag = make_tag(ctx.op_seq, CollectiveKind::reduce, kForward);
  if (ctx.rank != 0) acc = received(buf.dtype(), ctx.net.recv(*(pos + 1), tag));
  if (ctx.rank == root) return acc;
  ctx.net.send(*(pos - 1), tag, acc.bytes());
  return DataBuffer(buf.dtype());
}

DataBuffer allreduce(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op) {
  if (ctx.size == 1) return buf;
  return recursive_doubling(ctx, buf, op, CollectiveKind::allreduce);
}

DataBuffer scan(const DirectContext& ctx, const DataBuffer& buf, const ReductionOp& op) {
  const int n = ctx.size;
  const int r = ctx.rank;
  if (n == 1) return buf;
  DataBuffer acc = buf;

  // Up-sweep: rank r ends up holding the fold of the block of length
  // lowbit(r+1) that ends at r.
  for (int mask = 1; mask < n; mask <<= 1) {
    const auto tag = make_tag(ctx.op_seq, CollectiveKind::scan, log2_exact(mask));
    if ((r + 1) % (2 * mask) == 0) {
      acc = apply_reduce(op, received(buf.dtype(), ctx.net.recv(r - mask, tag)), acc);
    } else if ((r + 1) % (2 * mask) == mask && r + mask < n) {
      ctx.net.send(r + mask, tag, acc.bytes());
    }
  }
  // Down-sweep: completed prefixes flow to the right half of each block.
  for (int mask = highbit(n - 1); mask >= 1; mask >>= 1) {
    const auto tag = make_tag(ctx.op_seq, CollectiveKind::scan, kDownSweep + log2_exact(mask));
    if ((r + 1) % (2 * mask) == 0 && r + mask < n) {
      ctx.net.send(r + mask, tag, acc.bytes());
    } else if ((r + 1) % (2 * mask) == mask && r >= mask) {
      acc = apply_reduce(op, received(buf.dtype(), ctx.net.recv(r - mask, tag)), acc);
    }
  }
  return acc;
}

}  // namespace fmi::collectives::direct

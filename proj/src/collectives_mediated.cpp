#include "fmi/collectives.hpp"

namespace fmi::collectives::mediated {

namespace {

using std::to_string;

std::string key(const MediatedContext& ctx, CollectiveKind kind, const std::string& rest) {
  return ctx.prefix + std::string(collectives::to_string(kind)) + "/" + rest;
}

std::string rank_key(const MediatedContext& ctx, CollectiveKind kind, int r) {
  return key(ctx, kind, to_string(r));
}

DataBuffer fetch(const MediatedContext& ctx, Datatype dtype, const std::string& k) {
  return DataBuffer(dtype, store::get_poll(ctx.store, k, ctx.poll));
}

// Every data key an invocation may create, for cleanup.
std::vector<std::string> data_keys(const MediatedContext& ctx, CollectiveKind kind, int root) {
  std::vector<std::string> keys;
  switch (kind) {
    case CollectiveKind::bcast: keys.push_back(rank_key(ctx, kind, root)); break;
    case CollectiveKind::barrier:
      for (int r = 0; r < ctx.size; ++r) keys.push_back(key(ctx, kind, "in/" + to_string(r)));
      break;
    case CollectiveKind::scatter:
      for (int r = 0; r < ctx.size; ++r) {
        if (r != root) keys.push_back(key(ctx, kind, to_string(root) + ">" + to_string(r)));
      }
      break;
    case CollectiveKind::gather:
    case CollectiveKind::reduce:
    case CollectiveKind::allreduce:
      for (int r = 0; r < ctx.size; ++r) {
        if (r != root) keys.push_back(rank_key(ctx, kind, r));
      }
      if (kind == CollectiveKind::allreduce) keys.push_back(key(ctx, kind, "result"));
      break;
    case CollectiveKind::scan:
      for (int r = 0; r + 1 < ctx.size; ++r) keys.push_back(rank_key(ctx, kind, r));
      break;
  }
  return keys;
}

// Each rank marks itself done once it no longer needs any key of this
// invocation. The rank that observes all n markers removes everything.
void finish(const MediatedContext& ctx, CollectiveKind kind, int root) {
  const std::byte one{1};
  const auto done = key(ctx, kind, "done/");
  ctx.store.put(done + to_string(ctx.rank), std::span<const std::byte>(&one, 1));
  if (ctx.store.list_count(done) < static_cast<std::uint32_t>(ctx.size)) return;
  for (const auto& k : data_keys(ctx, kind, root)) ctx.store.remove(k);
  for (int r = 0; r < ctx.size; ++r) ctx.store.remove(done + to_string(r));
}

void check_root(const MediatedContext& ctx, int root) { binomial_schedule(ctx.size, root); }

// Fold of all inputs in ascending rank order at `root`; other ranks upload.
DataBuffer reduce_at(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op, int root,
                     CollectiveKind kind) {
  if (ctx.rank != root) {
    ctx.store.put(rank_key(ctx, kind, ctx.rank), buf.bytes());
    return DataBuffer(buf.dtype());
  }
  DataBuffer acc;
  for (int r = 0; r < ctx.size; ++r) {
    DataBuffer next = r == root ? buf : fetch(ctx, buf.dtype(), rank_key(ctx, kind, r));
    acc = r == 0 ? std::move(next) : apply_reduce(op, acc, next);
  }
  return acc;
}

}  // namespace

DataBuffer bcast(const MediatedContext& ctx, const DataBuffer& buf, int root) {
  check_root(ctx, root);
  if (ctx.size == 1) return buf;
  DataBuffer out = buf;
  if (ctx.rank == root) {
    ctx.store.put(rank_key(ctx, CollectiveKind::bcast, root), buf.bytes());
  } else {
    out = fetch(ctx, buf.dtype(), rank_key(ctx, CollectiveKind::bcast, root));
  }
  finish(ctx, CollectiveKind::bcast, root);
  return out;
}

void barrier(const MediatedContext& ctx) {
  if (ctx.size == 1) return;
  const std::byte one{1};
  const auto in = key(ctx, CollectiveKind::barrier, "in/");
  ctx.store.put(in + to_string(ctx.rank), std::span<const std::byte>(&one, 1));
  store::poll_count(ctx.store, in, static_cast<std::uint32_t>(ctx.size), ctx.poll);
  finish(ctx, CollectiveKind::barrier, 0);
}

DataBuffer gather(const MediatedContext& ctx, const DataBuffer& buf, int root) {
  check_root(ctx, root);
  if (ctx.size == 1) return buf;
  DataBuffer out(buf.dtype());
  if (ctx.rank != root) {
    ctx.store.put(rank_key(ctx, CollectiveKind::gather, ctx.rank), buf.bytes());
  } else {
    Bytes all;
    all.reserve(buf.size_bytes() * static_cast<std::size_t>(ctx.size));
    for (int r = 0; r < ctx.size; ++r) {
      Bytes part = r == root ? Bytes(buf.bytes().begin(), buf.bytes().end())
                             : store::get_poll(ctx.store, rank_key(ctx, CollectiveKind::gather, r), ctx.poll);
      if (part.size() != buf.size_bytes()) {
        throw FmiError(ErrorKind::ProtocolViolation, "gather contributions differ in size");
      }
      all.insert(all.end(), part.begin(), part.end());
    }
    out = DataBuffer(buf.dtype(), std::move(all));
  }
  finish(ctx, CollectiveKind::gather, root);
  return out;
}

DataBuffer scatter(const MediatedContext& ctx, const DataBuffer& buf, int root) {
  check_root(ctx, root);
  const auto n = static_cast<std::size_t>(ctx.size);
  if (ctx.rank == root && buf.count() % n != 0) {
    throw FmiError(ErrorKind::ProtocolViolation, "scatter of " + to_string(buf.count()) + " elements over " +
                                                     to_string(n) + " ranks");
  }
  if (ctx.size == 1) return buf;
  DataBuffer out(buf.dtype());
  if (ctx.rank == root) {
    const std::size_t block = buf.size_bytes() / n;
    for (int r = 0; r < ctx.size; ++r) {
      auto part = buf.bytes().subspan(static_cast<std::size_t>(r) * block, block);
      if (r == root) {
        out = DataBuffer(buf.dtype(), Bytes(part.begin(), part.end()));
      } else {
        ctx.store.put(key(ctx, CollectiveKind::scatter, to_string(root) + ">" + to_string(r)), part);
      }
    }
  } else {
    out = fetch(ctx, buf.dtype(), key(ctx, CollectiveKind::scatter, to_string(root) + ">" + to_string(ctx.rank)));
  }
  finish(ctx, CollectiveKind::scatter, root);
  return out;
}

DataBuffer reduce(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op, int root) {
  check_root(ctx, root);
  if (ctx.size == 1) return buf;
  DataBuffer out = reduce_at(ctx, buf, op, root, CollectiveKind::reduce);
  finish(ctx, CollectiveKind::reduce, root);
  return out;
}

DataBuffer allreduce(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op) {
  if (ctx.size == 1) return buf;
  DataBuffer out = reduce_at(ctx, buf, op, 0, CollectiveKind::allreduce);
  const auto result = key(ctx, CollectiveKind::allreduce, "result");
  if (ctx.rank == 0) {
    ctx.store.put(result, out.bytes());
  } else {
    out = fetch(ctx, buf.dtype(), result);
  }
  finish(ctx, CollectiveKind::allreduce, 0);
  return out;
}

DataBuffer scan(const MediatedContext& ctx, const DataBuffer& buf, const ReductionOp& op) {
  if (ctx.size == 1) return buf;
  DataBuffer acc = buf;
  if (ctx.rank > 0) {
    acc = apply_reduce(op, fetch(ctx, buf.dtype(), rank_key(ctx, CollectiveKind::scan, ctx.rank - 1)), buf);
  }
  if (ctx.rank + 1 < ctx.size) ctx.store.put(rank_key(ctx, CollectiveKind::scan, ctx.rank), acc.bytes());
  finish(ctx, CollectiveKind::scan, 0);
  return acc;
}

}  // namespace fmi::collectives::mediated

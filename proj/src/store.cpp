#include "fmi/store.hpp"

#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>

#include "fmi/wire.hpp"

namespace fmi::store {

namespace {
constexpr std::uint32_t kMaxKeyLen = 1u << 16;
}

// ---------------------------------------------------------------------------
// Backoff

std::chrono::milliseconds BackoffPolicy::delay(int retry) const {
  if (retry < 1) throw FmiError(ErrorKind::ProtocolViolation, "retry index starts at 1");
  if (retry > max_retries) {
    throw FmiError(ErrorKind::RetriesExhausted, "retry " + std::to_string(retry) + " exceeds " +
                                                    std::to_string(max_retries));
  }
  return std::chrono::milliseconds(retry <= linear_retries ? retry : 2 * retry);
}

std::chrono::milliseconds backoff_delay(int retry) { return BackoffPolicy{}.delay(retry); }

std::chrono::milliseconds worst_case_sleep(const BackoffPolicy& policy) {
  std::chrono::milliseconds total{0};
  for (int r = 1; r <= policy.max_retries; ++r) total += policy.delay(r);
  return total;
}

namespace {

void do_sleep(const PollOptions& opts, std::chrono::nanoseconds d) {
  if (opts.deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::nanoseconds>(*opts.deadline - Clock::now());
    d = std::min(d, std::max(left, std::chrono::nanoseconds{0}));
  }
  if (opts.sleep) opts.sleep(d);
  else std::this_thread::sleep_for(d);
}

template <class Attempt>
auto poll_loop(const PollOptions& opts, std::string_view what, Attempt attempt) {
  for (int r = 1;; ++r) {
    if (auto v = attempt()) return std::move(*v);
    if (r >= opts.policy.max_retries) {
      throw FmiError(ErrorKind::RetriesExhausted,
                     "gave up on " + std::string(what) + " after " + std::to_string(r) + " reads");
    }
    if (opts.deadline && Clock::now() >= *opts.deadline) {
      throw FmiError(ErrorKind::Timeout, "timed out polling " + std::string(what));
    }
    do_sleep(opts, std::max<std::chrono::nanoseconds>(opts.policy.delay(r), opts.floor));
  }
}

}  // namespace

Bytes get_poll(KvStore& store, std::string_view key, const PollOptions& opts) {
  return poll_loop(opts, key, [&] { return store.get(key); });
}

void poll_count(KvStore& store, std::string_view prefix, std::uint32_t target, const PollOptions& opts) {
  poll_loop(opts, prefix, [&]() -> std::optional<bool> {
    if (store.list_count(prefix) >= target) return true;
    return std::nullopt;
  });
}

// ---------------------------------------------------------------------------
// Wire

Bytes encode_request_header(Opcode op, std::string_view key, std::uint64_t value_len) {
  wire::Writer w;
  w.u8(static_cast<std::uint8_t>(op));
  w.u32(static_cast<std::uint32_t>(key.size()));
  w.raw(key);
  if (op == Opcode::put) w.u64(value_len);
  return std::move(w).take();
}

Bytes encode_request(const Request& r) {
  auto out = encode_request_header(r.op, r.key, r.value.size());
  if (r.op == Opcode::put) out.insert(out.end(), r.value.begin(), r.value.end());
  return out;
}

namespace {
Opcode checked_opcode(std::uint8_t v) {
  if (v < 1 || v > 4) throw FmiError(ErrorKind::ProtocolViolation, "unknown store opcode " + std::to_string(v));
  return static_cast<Opcode>(v);
}
}  // namespace

Request decode_request(std::span<const std::byte> raw) {
  wire::Reader r(raw);
  Request req;
  req.op = checked_opcode(r.u8());
  const auto key_len = r.u32();
  req.key = wire::to_string(r.raw(key_len));
  if (req.op == Opcode::put) {
    const auto len = r.u64();
    if (len > r.remaining()) throw FmiError(ErrorKind::ProtocolViolation, "truncated PUT value");
    auto v = r.raw(static_cast<std::size_t>(len));
    req.value.assign(v.begin(), v.end());
  }
  if (r.remaining() != 0) throw FmiError(ErrorKind::ProtocolViolation, "trailing bytes in store request");
  return req;
}

Bytes encode_reply(Opcode op, const Reply& rep) {
  wire::Writer w;
  w.u8(static_cast<std::uint8_t>(rep.status));
  if (rep.status == Status::ok) {
    if (op == Opcode::get) {
      w.u64(rep.value.size());
      w.raw(rep.value);
    } else if (op == Opcode::list_count) {
      w.u32(rep.count);
    }
  }
  return std::move(w).take();
}

Reply decode_reply(Opcode op, std::span<const std::byte> raw) {
  wire::Reader r(raw);
  Reply rep;
  const auto status = r.u8();
  if (status > 2) throw FmiError(ErrorKind::ProtocolViolation, "unknown store status");
  rep.status = static_cast<Status>(status);
  if (rep.status == Status::ok) {
    if (op == Opcode::get) {
      const auto len = r.u64();
      if (len > r.remaining()) throw FmiError(ErrorKind::ProtocolViolation, "truncated GET value");
      auto v = r.raw(static_cast<std::size_t>(len));
      rep.value.assign(v.begin(), v.end());
    } else if (op == Opcode::list_count) {
      rep.count = r.u32();
    }
  }
  if (r.remaining() != 0) throw FmiError(ErrorKind::ProtocolViolation, "trailing bytes in store reply");
  return rep;
}

// ---------------------------------------------------------------------------
// Metering

std::uint64_t dynamo_units(std::uint64_t len) noexcept {
  return std::max<std::uint64_t>(1, (len + kDynamoUnitBytes - 1) / kDynamoUnitBytes);
}

void MeterLedger::record_write(std::uint64_t len) {
  ++writes;
  bytes_written += len;
  write_units += dynamo_units(len);
}

void MeterLedger::record_read(std::uint64_t len) {
  ++reads;
  bytes_read += len;
  read_units += dynamo_units(len);
}

Money metered_cost(const MeterLedger& ledger, const ChannelProfile& profile, double elapsed_seconds) {
  const auto& p = profile.price;
  long double dollars = 0;
  switch (profile.kind) {
    case ChannelKind::s3:
      dollars = static_cast<long double>(ledger.writes) * p.p_s3_u + static_cast<long double>(ledger.reads) * p.p_s3_d;
      break;
    case ChannelKind::dynamodb:
      dollars = static_cast<long double>(ledger.write_units) * p.p_ddb_u +
                static_cast<long double>(ledger.read_units) * p.p_ddb_d;
      break;
    case ChannelKind::redis:
      dollars = static_cast<long double>(elapsed_seconds) * p.p_redis;
      break;
    case ChannelKind::direct:
      dollars = static_cast<long double>(elapsed_seconds) * p.p_hps;
      break;
  }
  return Money::from_dollars(dollars);
}

// ---------------------------------------------------------------------------
// Client

StoreClient::StoreClient(const Endpoint& server, Deadline connect_deadline)
    : sock_(tcp_connect(server, connect_deadline)) {
  sock_.set_nodelay(true);
}

Status StoreClient::roundtrip_status() {
  std::byte status[1];
  read_exact(sock_, status);
  const auto v = static_cast<std::uint8_t>(status[0]);
  if (v > 2) throw FmiError(ErrorKind::ProtocolViolation, "unknown store status");
  return static_cast<Status>(v);
}

void StoreClient::put(std::string_view key, std::span<const std::byte> value) {
  if (!sock_) throw FmiError(ErrorKind::ChannelFailure, "store client closed");
  write_all(sock_, encode_request_header(Opcode::put, key, value.size()));
  write_all(sock_, value);
  if (roundtrip_status() == Status::too_large) {
    throw FmiError(ErrorKind::MessageTooLarge, "value of " + std::to_string(value.size()) + " bytes for '" +
                                                   std::string(key) + "' exceeds the store limit");
  }
}

std::optional<Bytes> StoreClient::get(std::string_view key) {
  if (!sock_) throw FmiError(ErrorKind::ChannelFailure, "store client closed");
  write_all(sock_, encode_request_header(Opcode::get, key));
  if (roundtrip_status() != Status::ok) return std::nullopt;
  std::array<std::byte, 8> len_raw;
  read_exact(sock_, len_raw);
  Bytes value(wire::load_le(len_raw));
  read_exact(sock_, value);
  return value;
}

std::uint32_t StoreClient::list_count(std::string_view prefix) {
  if (!sock_) throw FmiError(ErrorKind::ChannelFailure, "store client closed");
  write_all(sock_, encode_request_header(Opcode::list_count, prefix));
  if (roundtrip_status() != Status::ok) throw FmiError(ErrorKind::ProtocolViolation, "LIST_COUNT failed");
  std::array<std::byte, 4> raw;
  read_exact(sock_, raw);
  return static_cast<std::uint32_t>(wire::load_le(raw));
}

void StoreClient::remove(std::string_view key) {
  if (!sock_) throw FmiError(ErrorKind::ChannelFailure, "store client closed");
  write_all(sock_, encode_request_header(Opcode::remove, key));
  roundtrip_status();
}

// ---------------------------------------------------------------------------
// Server

StoreServer::StoreServer(Options opts)
    : opts_(std::move(opts)), listener_(tcp_listen(opts_.bind, 1024)), rng_(opts_.seed) {
  validate(opts_.profile);
  listener_.set_nonblocking(true);
  endpoint_ = listener_.local_endpoint();
  wake_fd_ = ::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK);
}

StoreServer::~StoreServer() {
  stop();
  {
    std::lock_guard lock(conn_mu_);
    for (auto& s : conns_) s.shutdown();
  }
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  if (wake_fd_ >= 0) ::close(wake_fd_);
}

void StoreServer::stop() {
  stopping_ = true;
  std::uint64_t one = 1;
  [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof one);
}

MeterLedger StoreServer::ledger() const {
  std::lock_guard lock(data_mu_);
  return ledger_;
}

std::size_t StoreServer::size() const {
  std::lock_guard lock(data_mu_);
  return data_.size();
}

std::chrono::nanoseconds StoreServer::service_delay(std::uint64_t len) {
  const auto& p = opts_.profile;
  double seconds = p.alpha + static_cast<double>(len) / p.beta_inv;
  if (opts_.jitter) {
    std::lock_guard lock(rng_mu_);
    seconds *= std::uniform_real_distribution<double>(0.9, 1.1)(rng_);
  }
  seconds *= opts_.latency_scale;
  return std::chrono::nanoseconds(static_cast<std::int64_t>(seconds * 1e9));
}

void StoreServer::run() {
  while (!stopping_) {
    pollfd fds[2] = {{wake_fd_, POLLIN, 0}, {listener_.fd(), POLLIN, 0}};
    int rc = ::poll(fds, 2, 200);
    if (stopping_) break;
    if (rc <= 0 || !(fds[1].revents & POLLIN)) continue;
    for (;;) {
      int cfd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
      if (cfd < 0) break;
      std::lock_guard lock(conn_mu_);
      auto& sock = conns_.emplace_back(cfd);
      sock.set_nodelay(true);
      workers_.emplace_back([this, &sock] { serve_connection(sock); });
    }
  }
  std::lock_guard lock(conn_mu_);
  for (auto& s : conns_) s.shutdown();
}

void StoreServer::serve_connection(Socket& sock) {
  try {
    while (!stopping_ && handle_one(sock)) {
    }
  } catch (const FmiError&) {
    // client went away or spoke garbage; drop the connection only
  }
  std::lock_guard lock(conn_mu_);
  sock.reset();
}

bool StoreServer::handle_one(Socket& sock) {
  std::array<std::byte, 5> head;
  try {
    read_exact(sock, std::span(head).first(1));
  } catch (const FmiError&) {
    return false;  // clean close between requests
  }
  read_exact(sock, std::span(head).subspan(1));
  const auto op = checked_opcode(static_cast<std::uint8_t>(head[0]));
  const auto key_len = static_cast<std::uint32_t>(wire::load_le(std::span(head).subspan(1)));
  if (key_len > kMaxKeyLen) throw FmiError(ErrorKind::ProtocolViolation, "key too long");
  std::string key(key_len, '\0');
  read_exact(sock, std::as_writable_bytes(std::span(key)));

  Reply reply;
  switch (op) {
    case Opcode::put: {
      std::array<std::byte, 8> len_raw;
      read_exact(sock, len_raw);
      const auto len = wire::load_le(len_raw);
      if (len > opts_.profile.max_message) {
        // Drain the value so the stream stays aligned for the next request.
        std::array<std::byte, 64 * 1024> sink;
        for (std::uint64_t left = len; left > 0;) {
          const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(left, sink.size()));
          read_exact(sock, std::span(sink).first(n));
          left -= n;
        }
        std::this_thread::sleep_for(service_delay(0));
        reply.status = Status::too_large;
        break;
      }
      Bytes value(static_cast<std::size_t>(len));
      read_exact(sock, value);
      std::this_thread::sleep_for(service_delay(len));
      std::lock_guard lock(data_mu_);
      ledger_.record_write(len);
      data_.insert_or_assign(std::move(key), std::move(value));
      break;
    }
    case Opcode::get: {
      std::uint64_t len = 0;
      {
        std::lock_guard lock(data_mu_);
        if (auto it = data_.find(key); it != data_.end()) len = it->second.size();
      }
      std::this_thread::sleep_for(service_delay(len));
      std::lock_guard lock(data_mu_);
      auto it = data_.find(key);
      if (it == data_.end()) {
        reply.status = Status::not_found;
        ledger_.record_read(0);
      } else {
        reply.value = it->second;
        ledger_.record_read(reply.value.size());
      }
      break;
    }
    case Opcode::remove: {
      std::this_thread::sleep_for(service_delay(0));
      std::lock_guard lock(data_mu_);
      ++ledger_.deletes;
      data_.erase(key);
      break;
    }
    case Opcode::list_count: {
      std::this_thread::sleep_for(service_delay(0));
      std::lock_guard lock(data_mu_);
      ledger_.record_read(0);
      std::uint32_t n = 0;
      for (auto it = data_.lower_bound(key); it != data_.end() && it->first.starts_with(key); ++it) ++n;
      reply.count = n;
      break;
    }
  }
  write_all(sock, encode_reply(op, reply));
  return true;
}

BackgroundStore::BackgroundStore(StoreServer::Options opts)
    : server_(std::move(opts)), thread_([this] { server_.run(); }) {}

BackgroundStore::~BackgroundStore() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fmi::store

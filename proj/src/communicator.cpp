#include "fmi/communicator.hpp"

#include <charconv>
#include <cstdlib>
#include <exception>

namespace fmi {

namespace {

constexpr std::uint16_t kP2pTag = 0xFFFE;

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v && *v ? v : nullptr;
}

template <class T>
T parse_number(const char* name, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FmiError(ErrorKind::ProtocolViolation, std::string(name) + ": not a number: '" + std::string(text) + "'");
  }
  return value;
}

FmiError as_fmi_error(std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const FmiError& e) {
    return e;
  } catch (const std::exception& e) {
    return FmiError(ErrorKind::ChannelFailure, e.what());
  } catch (...) {
    return FmiError(ErrorKind::ChannelFailure, "unknown failure");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void CommunicatorConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) {
    throw FmiError(ErrorKind::ProtocolViolation, "communicator name must be non-empty and free of '/'");
  }
  if (world_size < 1) throw FmiError(ErrorKind::ProtocolViolation, "world size must be positive");
  if (rank < 0 || rank >= world_size) {
    throw FmiError(ErrorKind::ProtocolViolation,
                   "rank " + std::to_string(rank) + " outside [0, " + std::to_string(world_size) + ")");
  }
  if (!is_direct()) fmi::validate(profile);
}

CommunicatorConfig CommunicatorConfig::from_env() { return from_env(CommunicatorConfig{}); }

CommunicatorConfig CommunicatorConfig::from_env(CommunicatorConfig c) {
  if (auto v = env("FMI_COMM_NAME")) c.name = v;
  if (auto v = env("FMI_RANK")) c.rank = parse_number<int>("FMI_RANK", v);
  if (auto v = env("FMI_WORLD_SIZE")) c.world_size = parse_number<int>("FMI_WORLD_SIZE", v);
  if (auto v = env("FMI_CHANNEL")) {
    c.channel = parse_channel_kind(v);
    if (!c.is_direct()) c.profile = table2_profile(c.channel);
  }
  if (auto v = env("FMI_COORDINATOR")) c.coordinator = parse_endpoint(v);
  if (auto v = env("FMI_STORE")) c.store = parse_endpoint(v);
  if (auto v = env("FMI_EPOCH")) c.epoch = parse_number<std::uint64_t>("FMI_EPOCH", v);
  if (auto v = env("FMI_JOIN_TIMEOUT_MS")) {
    c.join_timeout = std::chrono::milliseconds(parse_number<std::int64_t>("FMI_JOIN_TIMEOUT_MS", v));
  }
  if (auto v = env("FMI_OP_TIMEOUT_MS")) {
    c.op_timeout = std::chrono::milliseconds(parse_number<std::int64_t>("FMI_OP_TIMEOUT_MS", v));
  }
  return c;
}

// ---------------------------------------------------------------------------
// DirectMesh

void DirectMesh::add(direct::PeerConnection conn) {
  const auto i = static_cast<std::size_t>(conn.remote_rank());
  peers_.at(i).emplace(std::move(conn));
}

bool DirectMesh::connected(int peer) const {
  return peer >= 0 && static_cast<std::size_t>(peer) < peers_.size() &&
         peers_[static_cast<std::size_t>(peer)].has_value();
}

direct::PeerConnection& DirectMesh::at(int peer) {
  if (!connected(peer)) {
    throw FmiError(ErrorKind::ProtocolViolation,
                   "rank " + std::to_string(rank_) + " has no connection to rank " + std::to_string(peer));
  }
  return *peers_[static_cast<std::size_t>(peer)];
}

void DirectMesh::send(int peer, std::uint16_t tag, std::span<const std::byte> payload) {
  at(peer).send(tag, payload);
  ++frames_sent_;
}

Bytes DirectMesh::recv(int peer, std::uint16_t tag) { return at(peer).recv(tag, deadline_); }

void DirectMesh::close_all() noexcept {
  for (auto& p : peers_) {
    if (p) p->close();
  }
}

// ---------------------------------------------------------------------------
// StoreJanitor

StoreJanitor::StoreJanitor(const Endpoint& store) : client_(store), thread_([this] { loop(); }) {}

StoreJanitor::~StoreJanitor() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

void StoreJanitor::remove(std::string key) {
  {
    std::lock_guard lk(mu_);
    queue_.push_back(std::move(key));
  }
  cv_.notify_all();
}

void StoreJanitor::drain() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [this] { return queue_.empty() && !busy_; });
}

void StoreJanitor::loop() {
  bool healthy = true;
  std::unique_lock lk(mu_);
  for (;;) {
    cv_.wait(lk, [this] { return stop_ || !queue_.empty(); });
    if (queue_.empty()) return;
    std::string key = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lk.unlock();
    if (healthy) {
      try {
        client_.remove(key);
      } catch (const FmiError&) {
        healthy = false;  // store gone; keep draining so waiters return
      }
    }
    lk.lock();
    busy_ = false;
    cv_.notify_all();
  }
}

// ---------------------------------------------------------------------------
// Communicator

Communicator::Communicator(CommunicatorConfig config)
    : config_(std::move(config)),
      sent_seq_(static_cast<std::size_t>(config_.world_size)),
      recv_seq_(static_cast<std::size_t>(config_.world_size)) {}

Communicator::Communicator(Communicator&&) noexcept = default;
Communicator& Communicator::operator=(Communicator&&) noexcept = default;
Communicator::~Communicator() = default;

Communicator Communicator::join(const CommunicatorConfig& config) {
  config.validate();
  Communicator comm(config);
  const int n = config.world_size;
  if (n == 1) return comm;
  const auto deadline = Clock::now() + config.join_timeout;

  try {
    if (config.is_direct()) {
      std::vector<int> peers;
      if (config.full_mesh) {
        for (int p = 0; p < n; ++p) {
          if (p != config.rank) peers.push_back(p);
        }
      } else {
        peers = collectives::required_peers(n, config.rank);
      }
      comm.mesh_ = std::make_unique<DirectMesh>(config.rank, n);
      std::vector<std::optional<direct::PeerConnection>> conns(peers.size());
      std::vector<std::exception_ptr> errors(peers.size());
      std::vector<std::thread> workers;
      workers.reserve(peers.size());
      for (std::size_t i = 0; i < peers.size(); ++i) {
        workers.emplace_back([&, i] {
          try {
            conns[i].emplace(direct::connect_pair(config.coordinator, config.name, config.epoch, config.rank,
                                                  peers[i], config.join_timeout, config.punch));
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (std::size_t i = 0; i < peers.size(); ++i) {
        if (errors[i]) {
          const auto e = as_fmi_error(errors[i]);
          throw FmiError(e.kind(), "pairing with rank " + std::to_string(peers[i]) + ": " + e.detail());
        }
        comm.mesh_->add(std::move(*conns[i]));
      }
      comm.mesh_->set_deadline(deadline);
      collectives::direct::barrier({*comm.mesh_, config.rank, n, 0});
    } else {
      comm.store_ = std::make_unique<store::StoreClient>(config.store, deadline);
      store::PollOptions poll;
      poll.floor = std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::duration<double>(config.profile.poll_floor));
      poll.deadline = deadline;
      collectives::mediated::barrier(
          {*comm.store_, config.rank, n, collectives::mediated_prefix(config.name, config.epoch, 0), poll});
      comm.janitor_ = std::make_unique<StoreJanitor>(config.store);
    }
  } catch (...) {
    const auto e = as_fmi_error(std::current_exception());
    comm.abort(e);
    throw FmiError(ErrorKind::JoinFailed, "rank " + std::to_string(config.rank) + " of '" + config.name +
                                              "': " + std::string(e.what()));
  }
  return comm;
}

std::uint64_t Communicator::frames_sent() const noexcept { return mesh_ ? mesh_->frames_sent() : 0; }

void Communicator::abort(const FmiError& cause) noexcept {
  if (state_ == CommState::Aborted) return;
  state_ = CommState::Aborted;
  cause_ = cause;
  if (mesh_) mesh_->close_all();
  if (store_) store_->close();
  janitor_.reset();
}

template <class F>
auto Communicator::run(F&& body) {
  if (state_ == CommState::Aborted) throw *cause_;
  try {
    return body();
  } catch (...) {
    const auto e = as_fmi_error(std::current_exception());
    abort(e);
    throw e;
  }
}

collectives::DirectContext Communicator::direct_ctx() {
  mesh_->set_deadline(deadline_after(config_.op_timeout));
  return {*mesh_, rank(), size(), op_seq_};
}

collectives::MediatedContext Communicator::mediated_ctx() {
  store::PollOptions poll;
  poll.floor = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::duration<double>(config_.profile.poll_floor));
  poll.deadline = deadline_after(config_.op_timeout);
  return {*store_, rank(), size(), collectives::mediated_prefix(config_.name, config_.epoch, op_seq_), poll};
}

template <class D, class M>
auto Communicator::dispatch(D&& on_direct, M&& on_mediated) {
  return run([&] {
    ++op_seq_;
    // A single rank needs no channel; the collectives return before using it.
    if (size() == 1) {
      DirectMesh none(0, 1);
      return on_direct(collectives::DirectContext{none, 0, 1, op_seq_});
    }
    if (config_.is_direct()) return on_direct(direct_ctx());
    return on_mediated(mediated_ctx());
  });
}

DataBuffer Communicator::bcast(const DataBuffer& buf, int root) {
  return dispatch([&](const auto& c) { return collectives::direct::bcast(c, buf, root); },
                  [&](const auto& c) { return collectives::mediated::bcast(c, buf, root); });
}

void Communicator::barrier() {
  dispatch([&](const auto& c) { collectives::direct::barrier(c); },
           [&](const auto& c) { collectives::mediated::barrier(c); });
}

DataBuffer Communicator::gather(const DataBuffer& buf, int root) {
  return dispatch([&](const auto& c) { return collectives::direct::gather(c, buf, root); },
                  [&](const auto& c) { return collectives::mediated::gather(c, buf, root); });
}

DataBuffer Communicator::scatter(const DataBuffer& buf, int root) {
  return dispatch([&](const auto& c) { return collectives::direct::scatter(c, buf, root); },
                  [&](const auto& c) { return collectives::mediated::scatter(c, buf, root); });
}

DataBuffer Communicator::reduce(const DataBuffer& buf, const ReductionOp& op, int root) {
  return dispatch([&](const auto& c) { return collectives::direct::reduce(c, buf, op, root); },
                  [&](const auto& c) { return collectives::mediated::reduce(c, buf, op, root); });
}

DataBuffer Communicator::allreduce(const DataBuffer& buf, const ReductionOp& op) {
  return dispatch([&](const auto& c) { return collectives::direct::allreduce(c, buf, op); },
                  [&](const auto& c) { return collectives::mediated::allreduce(c, buf, op); });
}

DataBuffer Communicator::scan(const DataBuffer& buf, const ReductionOp& op) {
  return dispatch([&](const auto& c) { return collectives::direct::scan(c, buf, op); },
                  [&](const auto& c) { return collectives::mediated::scan(c, buf, op); });
}

// ---------------------------------------------------------------------------
// Point-to-point

void Communicator::check_peer(int peer) const {
  if (peer < 0 || peer >= size() || peer == rank()) {
    throw FmiError(ErrorKind::ProtocolViolation, "invalid peer rank " + std::to_string(peer));
  }
}

std::string Communicator::p2p_key(int src, int dst, std::uint64_t seq) const {
  return config_.name + "/" + std::to_string(config_.epoch) + "/p2p/" + std::to_string(src) + ">" +
         std::to_string(dst) + "/" + std::to_string(seq);
}

void Communicator::send(int peer, std::span<const std::byte> payload) {
  run([&] {
    check_peer(peer);
    if (config_.is_direct()) {
      mesh_->set_deadline(deadline_after(config_.op_timeout));
      mesh_->send(peer, kP2pTag, payload);
    } else {
      store_->put(p2p_key(rank(), peer, sent_seq_[static_cast<std::size_t>(peer)]++), payload);
    }
  });
}

Bytes Communicator::recv(int peer) {
  return run([&] {
    check_peer(peer);
    if (config_.is_direct()) {
      mesh_->set_deadline(deadline_after(config_.op_timeout));
      return mesh_->recv(peer, kP2pTag);
    }
    auto ctx = mediated_ctx();
    auto key = p2p_key(peer, rank(), recv_seq_[static_cast<std::size_t>(peer)]++);
    Bytes data = store::get_poll(*store_, key, ctx.poll);
    janitor_->remove(std::move(key));
    return data;
  });
}

}  // namespace fmi

// Storage-mediated channel: key-value client interface, polling with hybrid
// backoff, metering, and an embedded store server that emulates object
// storage, NoSQL and in-memory caches through a ChannelProfile.
//
// Store wire protocol (TCP, little-endian):
//   request:  u8 opcode (1=PUT 2=GET 3=DELETE 4=LIST_COUNT) | u32 key_len | key
//             | PUT only: u64 value_len | value
//   response: u8 status (0=ok 1=not_found 2=too_large)
//             | GET ok: u64 value_len | value | LIST_COUNT: u32 count
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>

#include "fmi/core.hpp"
#include "fmi/profile.hpp"
#include "fmi/socket.hpp"

namespace fmi::store {

// ---------------------------------------------------------------------------
// Backoff

/// Retries 1..100 sleep `retry` ms, later retries sleep 2*retry ms, and at
/// most 500 attempts are made.
struct BackoffPolicy {
  int linear_retries = 100;
  int max_retries = 500;

  /// ProtocolViolation for retry < 1, RetriesExhausted for retry > max_retries.
  std::chrono::milliseconds delay(int retry) const;
};

std::chrono::milliseconds backoff_delay(int retry);

/// Sum of delay(1..max_retries), the longest a single poll can sleep.
std::chrono::milliseconds worst_case_sleep(const BackoffPolicy& policy);

// ---------------------------------------------------------------------------
// Client interface

class KvStore {
 public:
  virtual ~KvStore() = default;
  /// MessageTooLarge if the value exceeds the store's limit.
  virtual void put(std::string_view key, std::span<const std::byte> value) = 0;
  virtual std::optional<Bytes> get(std::string_view key) = 0;
  virtual std::uint32_t list_count(std::string_view prefix) = 0;
  /// Absent keys are a no-op.
  virtual void remove(std::string_view key) = 0;
};

using SleepFn = std::function<void(std::chrono::nanoseconds)>;

struct PollOptions {
  BackoffPolicy policy;
  std::chrono::nanoseconds floor{0};
  Deadline deadline;
  SleepFn sleep;  // defaults to std::this_thread::sleep_for
};

/// Polls `key` until present, sleeping max(backoff(r), floor) between
/// attempts. RetriesExhausted after policy.max_retries failed reads; Timeout
/// if the deadline passes first.
Bytes get_poll(KvStore& store, std::string_view key, const PollOptions& opts);

/// Polls list_count(prefix) until it reaches `target`, same schedule as get_poll.
void poll_count(KvStore& store, std::string_view prefix, std::uint32_t target, const PollOptions& opts);

// ---------------------------------------------------------------------------
// Wire protocol

enum class Opcode : std::uint8_t { put = 1, get = 2, remove = 3, list_count = 4 };
enum class Status : std::uint8_t { ok = 0, not_found = 1, too_large = 2 };

struct Request {
  Opcode op = Opcode::get;
  std::string key;
  Bytes value;  // PUT only

  friend bool operator==(const Request&, const Request&) = default;
};

struct Reply {
  Status status = Status::ok;
  Bytes value;              // GET ok only
  std::uint32_t count = 0;  // LIST_COUNT only

  friend bool operator==(const Reply&, const Reply&) = default;
};

/// Request prefix up to and including the PUT length field; value bytes
/// follow separately.
Bytes encode_request_header(Opcode op, std::string_view key, std::uint64_t value_len = 0);
Bytes encode_request(const Request& r);
/// Throws ProtocolViolation on unknown opcode, truncation or trailing bytes.
Request decode_request(std::span<const std::byte> raw);

Bytes encode_reply(Opcode op, const Reply& r);
Reply decode_reply(Opcode op, std::span<const std::byte> raw);

// ---------------------------------------------------------------------------
// Metering

struct MeterLedger {
  std::uint64_t writes = 0;
  std::uint64_t reads = 0;  // GET attempts and LIST_COUNT requests
  std::uint64_t deletes = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t write_units = 0;  // 1 kB units, rounded up per request, min 1
  std::uint64_t read_units = 0;

  void record_write(std::uint64_t len);
  void record_read(std::uint64_t len);

  friend bool operator==(const MeterLedger&, const MeterLedger&) = default;
};

std::uint64_t dynamo_units(std::uint64_t len) noexcept;

/// s3: requests x request price; dynamodb: units x unit price;
/// redis and direct: elapsed seconds x instance price.
Money metered_cost(const MeterLedger& ledger, const ChannelProfile& profile, double elapsed_seconds);

// ---------------------------------------------------------------------------
// TCP client

class StoreClient final : public KvStore {
 public:
  explicit StoreClient(const Endpoint& server, Deadline connect_deadline = std::nullopt);

  void put(std::string_view key, std::span<const std::byte> value) override;
  std::optional<Bytes> get(std::string_view key) override;
  std::uint32_t list_count(std::string_view prefix) override;
  void remove(std::string_view key) override;

  void close() noexcept { sock_.reset(); }

 private:
  Status roundtrip_status();
  Socket sock_;
};

// ---------------------------------------------------------------------------
// Server

/// Serves the store protocol with one thread per connection. Before answering
/// a request it sleeps alpha + len/beta_inv (len = value bytes moved), with
/// optional +-10% uniform jitter.
class StoreServer {
 public:
  struct Options {
    Endpoint bind{{127, 0, 0, 1}, 0};
    ChannelProfile profile = table2_profile(ChannelKind::redis);
    bool jitter = false;
    std::uint64_t seed = 1;
    /// Scales injected latency; 0 disables it. Tests use this to run
    /// protocol checks quickly.
    double latency_scale = 1.0;
  };

  explicit StoreServer(Options opts);
  ~StoreServer();
  StoreServer(const StoreServer&) = delete;
  StoreServer& operator=(const StoreServer&) = delete;

  Endpoint endpoint() const { return endpoint_; }
  const ChannelProfile& profile() const { return opts_.profile; }

  void run();
  void stop();

  MeterLedger ledger() const;
  std::size_t size() const;
  std::chrono::nanoseconds service_delay(std::uint64_t len);

 private:
  void serve_connection(Socket& sock);
  bool handle_one(Socket& sock);

  Options opts_;
  Socket listener_;
  Endpoint endpoint_;
  int wake_fd_ = -1;
  std::atomic<bool> stopping_{false};

  mutable std::mutex data_mu_;
  std::map<std::string, Bytes, std::less<>> data_;
  MeterLedger ledger_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;

  std::mutex conn_mu_;
  std::list<Socket> conns_;
  std::list<std::thread> workers_;
};

class BackgroundStore {
 public:
  explicit BackgroundStore(StoreServer::Options opts = {});
  ~BackgroundStore();

  Endpoint endpoint() const { return server_.endpoint(); }
  StoreServer& server() { return server_; }

 private:
  StoreServer server_;
  std::thread thread_;
};

}  // namespace fmi::store

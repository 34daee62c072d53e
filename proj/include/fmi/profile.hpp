// Channel characteristics and the price book. Shared by the store emulator
// (latency injection, size limits, metering) and the cost model.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fmi {

enum class ChannelKind { s3, dynamodb, redis, direct };

std::string_view to_string(ChannelKind kind) noexcept;
/// Accepts "s3", "dynamodb" (or "ddb"), "redis", "direct". Throws
/// ProtocolViolation otherwise.
ChannelKind parse_channel_kind(std::string_view name);

/// Dollar amounts kept as integer nano-dollars.
struct Money {
  std::int64_t nano = 0;

  static Money from_dollars(long double d) { return Money{static_cast<std::int64_t>(std::llround(d * 1e9L))}; }
  double dollars() const noexcept { return static_cast<double>(nano) / 1e9; }

  Money& operator+=(Money o) noexcept {
    nano += o.nano;
    return *this;
  }
  friend Money operator+(Money a, Money b) noexcept { return Money{a.nano + b.nano}; }
  friend auto operator<=>(const Money&, const Money&) = default;
};

/// Unit prices in dollars. Request prices are per request, DynamoDB prices
/// per 1 kB unit, the rest per second (p_faas per GiB-second).
struct PriceComponents {
  double p_faas = 0;
  double p_hps = 0;
  double p_redis = 0;
  double p_s3_d = 0;
  double p_s3_u = 0;
  double p_ddb_d = 0;
  double p_ddb_u = 0;

  PriceComponents scaled(double k) const {
    return {p_faas * k, p_hps * k, p_redis * k, p_s3_d * k, p_s3_u * k, p_ddb_d * k, p_ddb_u * k};
  }
};

inline constexpr std::uint64_t kUnlimitedMessage = ~std::uint64_t{0};
inline constexpr std::uint64_t kDynamoUnitBytes = 1000;

struct ChannelProfile {
  ChannelKind kind = ChannelKind::direct;
  std::string preset;       // which constant set produced this profile
  double alpha = 0;         // seconds
  double beta_inv = 1;      // bytes per second
  std::uint64_t max_message = kUnlimitedMessage;
  PriceComponents price;
  double poll_floor = 0;    // seconds

  std::string name() const { return std::string(to_string(kind)); }
};

/// Throws ProtocolViolation unless alpha >= 0, beta_inv > 0, max_message > 0
/// and all prices are non-negative.
void validate(const ChannelProfile& p);

/// AWS eu-central-1 price book.
PriceComponents table3_prices();

/// Latency/bandwidth presets measured on AWS. For s3 this is the 50 MB/s
/// figure; s3_table4_derived_profile() is the 500 MB/s variant.
ChannelProfile table2_profile(ChannelKind kind);
ChannelProfile s3_table4_derived_profile();

/// table2_profile() for s3, dynamodb, redis, direct in that order.
std::vector<ChannelProfile> table2_profiles();

}  // namespace fmi

#include "fmi/profile.hpp"

#include "fmi/core.hpp"

namespace fmi {

std::string_view to_string(ChannelKind kind) noexcept {
  switch (kind) {
    case ChannelKind::s3: return "s3";
    case ChannelKind::dynamodb: return "dynamodb";
    case ChannelKind::redis: return "redis";
    case ChannelKind::direct: return "direct";
  }
  return "unknown";
}

ChannelKind parse_channel_kind(std::string_view name) {
  if (name == "s3") return ChannelKind::s3;
  if (name == "dynamodb" || name == "ddb") return ChannelKind::dynamodb;
  if (name == "redis") return ChannelKind::redis;
  if (name == "direct") return ChannelKind::direct;
  throw FmiError(ErrorKind::ProtocolViolation, "unknown channel '" + std::string(name) + "'");
}

void validate(const ChannelProfile& p) {
  const auto& c = p.price;
  if (!(p.alpha >= 0) || !(p.beta_inv > 0) || p.max_message == 0 || !(p.poll_floor >= 0) || c.p_faas < 0 ||
      c.p_hps < 0 || c.p_redis < 0 || c.p_s3_d < 0 || c.p_s3_u < 0 || c.p_ddb_d < 0 || c.p_ddb_u < 0) {
    throw FmiError(ErrorKind::ProtocolViolation, "invalid channel profile '" + p.preset + "'");
  }
}

PriceComponents table3_prices() {
  PriceComponents p;
  p.p_faas = 1.67e-5;
  p.p_hps = 3.72e-6;
  p.p_redis = 1.05e-5;
  p.p_s3_d = 4.3e-7;
  p.p_s3_u = 5.4e-6;
  p.p_ddb_d = 7.62e-8;
  p.p_ddb_u = 1.5e-6;
  return p;
}

ChannelProfile table2_profile(ChannelKind kind) {
  ChannelProfile p;
  p.kind = kind;
  p.price = table3_prices();
  switch (kind) {
    case ChannelKind::s3:
      p.preset = "s3-table2";
      p.alpha = 14.7e-3;
      p.beta_inv = 50e6;
      p.max_message = 5'000'000'000'000ULL;
      p.poll_floor = 20e-3;
      break;
    case ChannelKind::dynamodb:
      p.preset = "dynamodb-table2";
      p.alpha = 8.9e-3;
      p.beta_inv = 7e6;
      p.max_message = 400'000;
      break;
    case ChannelKind::redis:
      p.preset = "redis-table2";
      p.alpha = 0.88e-3;
      p.beta_inv = 100e6;
      p.max_message = 512ULL << 20;
      break;
    case ChannelKind::direct:
      p.preset = "direct-table2";
      p.alpha = 0.39e-3;
      p.beta_inv = 400e6;
      p.max_message = kUnlimitedMessage;
      break;
  }
  return p;
}

ChannelProfile s3_table4_derived_profile() {
  auto p = table2_profile(ChannelKind::s3);
  p.preset = "s3-table4-derived";
  p.beta_inv = 500e6;
  return p;
}

std::vector<ChannelProfile> table2_profiles() {
  return {table2_profile(ChannelKind::s3), table2_profile(ChannelKind::dynamodb), table2_profile(ChannelKind::redis),
          table2_profile(ChannelKind::direct)};
}

}  // namespace fmi

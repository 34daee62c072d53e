// Alpha-beta time model, per-channel dollar cost and model-driven channel
// selection. Pure functions; presets live in profile.hpp.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmi/profile.hpp"

namespace fmi::perfmodel {

/// alpha + s / beta_inv, in seconds.
double transfer_time(const ChannelProfile& profile, double size_bytes);

/// P * t * p_faas * M: P workers of M GiB alive for t seconds.
Money function_cost(double participants, double seconds, double memory_gib, double p_faas);

/// s3: reps x (upload + download request); dynamodb: reps x ceil(s / 1 kB)
/// x (write + read unit); redis and direct: total_time x instance price.
Money channel_cost(const ChannelProfile& profile, std::uint64_t size_bytes, std::uint64_t reps,
                   double total_seconds);

struct CostQuery {
  int participants = 2;
  double memory_gib = 2;
  std::uint64_t size_bytes = 1'000'000;
  std::uint64_t reps = 1'000'000;
  ChannelProfile channel;
};

struct CostReport {
  std::string channel;
  std::string preset;
  double time_per_exchange = 0;  // seconds
  Money faas_cost;
  Money channel_cost;
  Money total_cost;
};

/// ProtocolViolation unless participants >= 1 and memory_gib > 0.
CostReport exchange_report(const CostQuery& query);

struct SelectionPolicy {
  enum class Kind { min_cost, min_time, min_cost_under_time_budget };
  Kind kind = Kind::min_cost;
  double time_budget = 0;  // seconds, budget policy only

  static SelectionPolicy min_cost() { return {Kind::min_cost, 0}; }
  static SelectionPolicy min_time() { return {Kind::min_time, 0}; }
  static SelectionPolicy under_budget(double seconds) { return {Kind::min_cost_under_time_budget, seconds}; }
};

/// Reports for every candidate (`query.channel` is replaced by each profile),
/// best first. Ties break by lower time, then by name. The budget policy
/// drops profiles slower than the budget. ProtocolViolation for an empty
/// list or when no profile fits the budget.
std::vector<CostReport> select_channel(const std::vector<ChannelProfile>& profiles, CostQuery query,
                                       SelectionPolicy policy);

}  // namespace fmi::perfmodel

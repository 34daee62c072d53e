#include "fmi/perfmodel.hpp"

#include <algorithm>
#include <cstdio>

#include "fmi/core.hpp"
#include "fmi/store.hpp"

namespace fmi::perfmodel {

double transfer_time(const ChannelProfile& profile, double size_bytes) {
  return profile.alpha + size_bytes / profile.beta_inv;
}

Money function_cost(double participants, double seconds, double memory_gib, double p_faas) {
  return Money::from_dollars(static_cast<long double>(participants) * seconds * memory_gib * p_faas);
}

Money channel_cost(const ChannelProfile& profile, std::uint64_t size_bytes, std::uint64_t reps,
                   double total_seconds) {
  const auto& p = profile.price;
  const auto n = static_cast<long double>(reps);
  switch (profile.kind) {
    case ChannelKind::s3:
      return Money::from_dollars(n * (static_cast<long double>(p.p_s3_u) + p.p_s3_d));
    case ChannelKind::dynamodb:
      return Money::from_dollars(n * static_cast<long double>(store::dynamo_units(size_bytes)) *
                                 (static_cast<long double>(p.p_ddb_u) + p.p_ddb_d));
    case ChannelKind::redis:
      return Money::from_dollars(static_cast<long double>(total_seconds) * p.p_redis);
    case ChannelKind::direct:
      return Money::from_dollars(static_cast<long double>(total_seconds) * p.p_hps);
  }
  return {};
}

CostReport exchange_report(const CostQuery& q) {
  if (q.participants < 1 || !(q.memory_gib > 0)) {
    throw FmiError(ErrorKind::ProtocolViolation, "cost query needs P >= 1 and M > 0");
  }
  CostReport r;
  r.channel = q.channel.name();
  r.preset = q.channel.preset;
  r.time_per_exchange = transfer_time(q.channel, static_cast<double>(q.size_bytes));
  const double total = r.time_per_exchange * static_cast<double>(q.reps);
  r.faas_cost = function_cost(q.participants, total, q.memory_gib, q.channel.price.p_faas);
  r.channel_cost = channel_cost(q.channel, q.size_bytes, q.reps, total);
  r.total_cost = r.faas_cost + r.channel_cost;
  return r;
}

std::vector<CostReport> select_channel(const std::vector<ChannelProfile>& profiles, CostQuery query,
                                       SelectionPolicy policy) {
  if (profiles.empty()) throw FmiError(ErrorKind::ProtocolViolation, "select_channel: no candidate profiles");
  std::vector<CostReport> reports;
  for (const auto& p : profiles) {
    query.channel = p;
    reports.push_back(exchange_report(query));
  }
  if (policy.kind == SelectionPolicy::Kind::min_cost_under_time_budget) {
    const double fastest =
        std::min_element(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
          return a.time_per_exchange < b.time_per_exchange;
        })->time_per_exchange;
    std::erase_if(reports, [&](const CostReport& r) { return r.time_per_exchange > policy.time_budget; });
    if (reports.empty()) {
      char msg[160];
      std::snprintf(msg, sizeof msg, "no channel meets the %.6g s budget; fastest achievable is %.6g s",
                    policy.time_budget, fastest);
      throw FmiError(ErrorKind::ProtocolViolation, msg);
    }
  }
  auto by_time = [](const CostReport& a, const CostReport& b) {
    if (a.time_per_exchange != b.time_per_exchange) return a.time_per_exchange < b.time_per_exchange;
    return a.channel + "/" + a.preset < b.channel + "/" + b.preset;
  };
  if (policy.kind == SelectionPolicy::Kind::min_time) {
    std::stable_sort(reports.begin(), reports.end(), by_time);
  } else {
    std::stable_sort(reports.begin(), reports.end(), [&](const CostReport& a, const CostReport& b) {
      if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
      return by_time(a, b);
    });
  }
  return reports;
}

}  // namespace fmi::perfmodel

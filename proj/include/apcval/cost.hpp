#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "apcval/domain.hpp"

namespace apcval {

enum class cost_scheme { no_first_count, with_first_count, combined };

inline std::string_view to_string(cost_scheme s) {
  switch (s) {
    case cost_scheme::no_first_count: return "no_first_count";
    case cost_scheme::with_first_count: return "with_first_count";
    case cost_scheme::combined: return "combined";
  }
  return "";
}

/// Counting cost of one video: hours * r_av * c_labor.
inline double counting_cost(double duration_s, const cost_rates& rates) {
  if (!(duration_s >= 0.0)) throw precondition_error("counting_cost: duration must be >= 0");
  return duration_s / 3600.0 * rates.r_av * rates.c_labor;
}

struct record_cost {
  std::string dop_id;
  double counting_cost = 0.0;
};

struct cost_breakdown {
  std::vector<record_cost> per_record;
  double c_u = 0.0;
  double c_s0 = 0.0;
  double c_sZ = 0.0;
  cost_scheme scheme = cost_scheme::no_first_count;
  std::size_t n_s = 0;
  std::size_t n_u = 0;
  std::vector<std::string> warnings;

  cost_params params() const { return {c_u, c_s0, c_sZ}; }
};

namespace detail {

struct stratum_costs {
  std::vector<record_cost> per_record;
  std::vector<const dop_record*> safe;
  std::vector<double> safe_cost;
  double unsafe_mean = 0.0;
  std::size_t n_u = 0;
};

inline stratum_costs split_costs(std::span<const dop_record> records, const cost_rates& rates) {
  rates.validate();
  stratum_costs sc;
  double unsafe_sum = 0.0;
  std::vector<std::string> unlabeled;
  for (const auto& r : records) {
    const double c = counting_cost(r.duration_s, rates);
    sc.per_record.push_back({r.dop_id, c});
    if (r.is_safe()) {
      sc.safe.push_back(&r);
      sc.safe_cost.push_back(c);
    } else if (r.is_unsafe()) {
      unsafe_sum += c;
      ++sc.n_u;
    } else {
      unlabeled.push_back(r.dop_id);
    }
  }
  if (!unlabeled.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < unlabeled.size() && i < 20; ++i) ids += (i ? ", " : "") + unlabeled[i];
    throw precondition_error("cost attribution needs labeled records; unlabeled: " + ids);
  }
  sc.unsafe_mean = sc.n_u ? unsafe_sum / static_cast<double>(sc.n_u) : 0.0;
  return sc;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline cost_breakdown start(stratum_costs& sc, const cost_rates& rates, cost_scheme scheme) {
  cost_breakdown out;
  out.scheme = scheme;
  out.per_record = std::move(sc.per_record);
  out.n_s = sc.safe.size();
  out.n_u = sc.n_u;
  // Unsafe records always get both manual counts and the supervisor share.
  out.c_u = (1.0 + rates.r_s) * sc.unsafe_mean + rates.recording_cost;
  if (sc.n_u == 0) out.warnings.emplace_back("no unsafe records: c_u set to the recording cost only");
  if (sc.safe.empty()) out.warnings.emplace_back("no safe records: c_s0 and c_sZ set to 0");
  return out;
}

}  // namespace detail

/// Safe records classified without any manual count:
/// c_s0 = 0, c_sZ = (1 + r_S) mean safe counting cost.
inline cost_breakdown costs_no_first_count(std::span<const dop_record> records,
                                           const cost_rates& rates) {
  auto sc = detail::split_costs(records, rates);
  auto out = detail::start(sc, rates, cost_scheme::no_first_count);
  if (!sc.safe.empty()) {
    out.c_s0 = rates.recording_cost;
    out.c_sZ = (1.0 + rates.r_s) * detail::mean_of(sc.safe_cost);
  }
  return out;
}

/// The first manual count is part of classification:
/// c_s0 = mean safe counting cost, c_sZ = r_S times that mean.
inline cost_breakdown costs_with_first_count(std::span<const dop_record> records,
                                             const cost_rates& rates) {
  auto sc = detail::split_costs(records, rates);
  auto out = detail::start(sc, rates, cost_scheme::with_first_count);
  if (!sc.safe.empty()) {
    const double m = detail::mean_of(sc.safe_cost);
    out.c_s0 = m + rates.recording_cost;
    out.c_sZ = rates.r_s * m;
  }
  return out;
}

/// Combined classification. Reclassified safe records carry their first
/// count in the basic cost:
///   c_s0 = mean over safe of W * c,  c_sZ = mean over safe of (1 - W + r_S) * c.
/// `reclassified` maps dop_id to W and must cover every safe record.
inline cost_breakdown costs_combined(std::span<const dop_record> records,
                                     const std::map<std::string, bool>& reclassified,
                                     const cost_rates& rates) {
  auto sc = detail::split_costs(records, rates);
  auto out = detail::start(sc, rates, cost_scheme::combined);
  std::vector<std::string> missing;
  double base = 0.0, counting = 0.0;
  for (std::size_t i = 0; i < sc.safe.size(); ++i) {
    const auto it = reclassified.find(sc.safe[i]->dop_id);
    if (it == reclassified.end()) {
      missing.push_back(sc.safe[i]->dop_id);
      continue;
    }
    const double w = it->second ? 1.0 : 0.0;
    base += w * sc.safe_cost[i];
    counting += (1.0 - w + rates.r_s) * sc.safe_cost[i];
  }
  if (!missing.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) ids += (i ? ", " : "") + missing[i];
    throw precondition_error("costs_combined: missing reclassification flag for " + ids);
  }
  if (!sc.safe.empty()) {
    const double n_s = static_cast<double>(sc.safe.size());
    out.c_s0 = base / n_s + rates.recording_cost;
    out.c_sZ = counting / n_s;
  }
  return out;
}

}  // namespace apcval

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "apcval/domain.hpp"
#include "apcval/normal.hpp"

namespace apcval {

enum class quota_source { given, fixed, optimized };

inline std::string_view to_string(quota_source s) {
  switch (s) {
    case quota_source::given: return "given";
    case quota_source::fixed: return "fixed";
    case quota_source::optimized: return "optimized";
  }
  return "";
}

namespace detail {

/// Ceiling that ignores representation error: 0.35 * 10000 is 3500, not 3501.
inline count_t ceil_count(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<count_t>(r);
  return static_cast<count_t>(std::ceil(x));
}

}  // namespace detail

/// (z_{1-alpha/2} + z_{1-beta/2})^2
inline double z_sum_squared(const test_params& p) {
  const double zz = two_sided_z(p.alpha) + two_sided_z(p.beta);
  return zz * zz;
}

/// Real-valued classic sample size (z_a + z_b)^2 nu^2 / delta^2.
inline double sample_size_classic_exact(const test_params& p) {
  p.validate();
  return z_sum_squared(p) * p.nu * p.nu / (p.delta * p.delta);
}

/// Classic sample size n_e, rounded up and floored at 1.
inline count_t sample_size_classic(const test_params& p) {
  return std::max<count_t>(1, detail::ceil_count(sample_size_classic_exact(p)));
}

/// Enlargement factor p_s (nu_s/nu)^2 (1/q - 1) + 1 of the recorded size.
inline double recorded_size_factor(const partition_params& part) {
  part.validate();
  return part.p_s * part.nu_s_ratio * part.nu_s_ratio * (1.0 / part.q - 1.0) + 1.0;
}

inline double recorded_size_exact(double n_e, const partition_params& part) {
  return n_e * recorded_size_factor(part);
}

/// Recorded size n_rec = ceil(n_e * factor).
inline count_t recorded_size(count_t n_e, const partition_params& part) {
  return detail::ceil_count(recorded_size_exact(static_cast<double>(n_e), part));
}

struct quota_result {
  double q0 = 1.0;
  bool clamped = false;
  std::string note;
};

/// Quota that keeps the planned power when n_rec is already fixed.
/// Throws when n_rec is below the classic requirement.
inline quota_result quota_for_fixed_record(double n_rec, const test_params& p,
                                           const partition_params& part) {
  part.validate();
  const double n_e = sample_size_classic_exact(p);
  if (n_rec < n_e * (1.0 - 1e-12))
    throw precondition_error("quota_for_fixed_record: n_rec " + std::to_string(n_rec) +
                             " is below the classic sample size " + std::to_string(n_e) +
                             "; no quota is feasible");
  const double nu_s = part.nu_s_ratio * p.nu;
  const double ps_nus2 = part.p_s * nu_s * nu_s;
  quota_result r;
  const double excess = n_rec * p.delta * p.delta / z_sum_squared(p) - p.nu * p.nu;
  if (ps_nus2 <= 0.0) {
    r.q0 = 1.0;
    r.clamped = excess > 0.0;
    r.note = "safe stratum carries no variance; quota set to 1";
    return r;
  }
  const double q = 1.0 / (std::max(0.0, excess) / ps_nus2 + 1.0);
  r.q0 = std::clamp(q, std::numeric_limits<double>::min(), 1.0);
  r.clamped = r.q0 != q;
  if (r.clamped) r.note = "quota clamped into (0, 1]";
  return r;
}

struct optimal_quota_result {
  double q0 = 1.0;
  double a = 0.0;
  double b = 0.0;
  bool capped = false;
  std::string note;
};

/// Cost-optimal quota min(sqrt(a/b), 1) with
///   a = p_u c_u / (p_s c_sZ) + c_s0 / c_sZ,
///   b = (nu^2 - p_s nu_s^2) / (p_s nu_s^2).
/// For b <= 0 the cost decreases monotonically in q and the result is 1.
inline optimal_quota_result optimal_quota(const partition_params& part, double nu,
                                          const cost_params& costs) {
  part.validate();
  costs.validate();
  if (!(costs.c_sZ > 0.0)) throw precondition_error("optimal_quota: c_sZ must be > 0");
  if (!(part.p_s > 0.0)) throw precondition_error("optimal_quota: p_s must be > 0");
  const double nu_s = part.nu_s_ratio * nu;
  if (!(nu_s > 0.0)) throw precondition_error("optimal_quota: nu_s must be > 0");

  optimal_quota_result r;
  const double ps_nus2 = part.p_s * nu_s * nu_s;
  r.a = part.p_u() * costs.c_u / (part.p_s * costs.c_sZ) + costs.c_s0 / costs.c_sZ;
  r.b = (nu * nu - ps_nus2) / ps_nus2;
  if (r.b <= 0.0) {
    r.q0 = 1.0;
    r.capped = true;
    r.note = "nu^2 <= p_s nu_s^2: skipping safe records never lowers cost, q0 = 1";
    return r;
  }
  const double q = std::sqrt(r.a / r.b);
  r.capped = q >= 1.0;
  r.q0 = std::min(q, 1.0);
  if (r.q0 <= 0.0) {
    // a == 0: counting nothing would be free, the smallest valid quota is the limit.
    r.q0 = std::numeric_limits<double>::min();
    r.note = "a = 0: optimum at the lower quota limit";
  }
  return r;
}

/// n_rec (p_u c_u + p_s (c_s0 + q c_sZ)).
inline double total_cost(double n_rec, double q, const partition_params& part,
                         const cost_params& costs) {
  return n_rec * (part.p_u() * costs.c_u + part.p_s * (costs.c_s0 + q * costs.c_sZ));
}

inline count_t apply_buffer(count_t n, double buffer) {
  if (!(buffer >= 1.0)) throw precondition_error("apply_buffer: buffer must be >= 1");
  return detail::ceil_count(static_cast<double>(n) * buffer);
}

/// Realized quota ceil(q0 N_s) / N_s.
inline double round_quota(double q0, count_t n_s) {
  if (!(q0 > 0.0 && q0 <= 1.0)) throw precondition_error("round_quota: q0 must lie in (0, 1]");
  if (n_s < 1) throw precondition_error("round_quota: n_s must be >= 1");
  return static_cast<double>(detail::ceil_count(q0 * static_cast<double>(n_s))) /
         static_cast<double>(n_s);
}

struct plan {
  count_t n_e = 0;
  count_t n_rec = 0;
  double q_planned = 1.0;
  quota_source q_source = quota_source::given;
  count_t buffered_n_e = 0;
  count_t buffered_n_rec = 0;
  double planning_nu = 0.0;
  test_params params;
  std::optional<partition_params> partition;
  std::optional<cost_params> costs;
  std::optional<double> cost_classic;
  std::optional<double> cost_partitioned;
  std::vector<std::string> warnings;
};

struct plan_options {
  // Optimize q from `costs` instead of taking partition.q.
  bool optimize = false;
  // Derive q from a fixed recorded size.
  std::optional<count_t> fixed_n_rec;
};

/// Full planning pass: classic size, recorded size for the partitioned test,
/// buffering and, when costs are given, the cost comparison.
inline plan make_plan(const test_params& params, std::optional<partition_params> partition,
                      std::optional<cost_params> costs, const plan_options& opts = {}) {
  params.validate();
  plan pl;
  pl.params = params;
  pl.costs = costs;

  test_params effective = params;
  if (params.nu < params.nu_min) {
    pl.warnings.push_back("planning nu below nu_min; nu_min used for planning");
    effective.nu = params.nu_min;
  }
  pl.planning_nu = effective.nu;
  if (sample_size_classic_exact(effective) < 1.0)
    pl.warnings.emplace_back("degenerate plan: classic sample size floored at 1");
  pl.n_e = sample_size_classic(effective);
  pl.buffered_n_e = apply_buffer(pl.n_e, params.buffer);

  if (!partition) {
    pl.n_rec = pl.n_e;
    pl.q_planned = 1.0;
    pl.buffered_n_rec = pl.buffered_n_e;
    if (costs) {
      const partition_params all_unsafe{0.0, 0.0, 1.0};
      pl.cost_classic = total_cost(static_cast<double>(pl.n_e), 1.0, all_unsafe, *costs);
    }
    return pl;
  }

  partition_params part = *partition;
  if (opts.fixed_n_rec) {
    const auto qr = quota_for_fixed_record(static_cast<double>(*opts.fixed_n_rec), effective, part);
    part.q = qr.q0;
    pl.q_source = quota_source::fixed;
    if (!qr.note.empty()) pl.warnings.push_back(qr.note);
  } else if (opts.optimize) {
    if (!costs) throw precondition_error("make_plan: quota optimization requires costs");
    costs->validate(true);
    const auto qr = optimal_quota(part, effective.nu, *costs);
    part.q = qr.q0;
    pl.q_source = quota_source::optimized;
    if (!qr.note.empty()) pl.warnings.push_back(qr.note);
  }
  part.validate();
  pl.partition = part;
  pl.q_planned = part.q;
  pl.n_rec = opts.fixed_n_rec ? *opts.fixed_n_rec : recorded_size(pl.n_e, part);
  pl.buffered_n_rec = apply_buffer(pl.n_rec, params.buffer);
  if (costs) {
    // The classic test counts every record in full: unsafe and safe alike.
    cost_params classic = *costs;
    pl.cost_classic = static_cast<double>(pl.n_e) *
                      (part.p_u() * classic.c_u + part.p_s * (classic.c_s0 + classic.c_sZ));
    pl.cost_partitioned = total_cost(static_cast<double>(pl.n_rec), part.q, part, *costs);
  }
  return pl;
}

}  // namespace apcval

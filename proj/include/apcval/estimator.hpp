#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apcval/domain.hpp"
#include "apcval/normal.hpp"

namespace apcval {

/// CI endpoints within this distance of +-delta are treated as equal to it.
inline constexpr double boundary_tolerance = 1e-12;

enum class verdict { pass, fail };
enum class test_kind { classic, partitioned };

inline std::string_view to_string(verdict v) { return v == verdict::pass ? "pass" : "fail"; }
inline std::string_view to_string(test_kind t) {
  return t == test_kind::classic ? "classic" : "partitioned";
}

/// Relative difference of one evaluated record together with its weight in
/// the point estimate (1 for unsafe, 1/q for sampled safe).
struct relative_difference {
  std::string dop_id;
  double d = 0.0;
  partition_label stratum = partition_label::unsafe;
  double weight = 1.0;
};

/// Relative differences split by stratum. `safe_counted` holds only the
/// sampled safe values, `n_safe` is the size of the whole safe stratum.
struct stratified_sample {
  std::vector<double> safe_counted;
  std::vector<double> unsafe;
  std::size_t n_safe = 0;

  std::size_t n() const noexcept { return n_safe + unsafe.size(); }
};

struct confidence_interval_t {
  double low = 0.0;
  double high = 0.0;
};

struct pooled_variance_result {
  double variance = 0.0;
  bool clamped_s = false;
  bool clamped_u = false;
};

struct evaluation_report {
  test_kind test = test_kind::partitioned;
  double d_hat = 0.0;
  double nu_hat = 0.0;
  std::size_t n = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  double z = 0.0;
  verdict result = verdict::fail;
  partition_stats stats;
  bool clamped_s = false;
  bool clamped_u = false;
  std::optional<double> q_planned;
  test_params params;
  std::vector<std::string> warnings;
  std::vector<relative_difference> details;
};

namespace detail {

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation with the n-1 denominator; nullopt below 2 values.
inline std::optional<double> sample_sd(std::span<const double> v) {
  if (v.size() < 2) return std::nullopt;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

}  // namespace detail

/// Leave-q-out estimate of the mean manual count:
/// (sum over unsafe M + sum over sampled safe M / q_effective) / n.
inline double mhat_q(std::span<const dop_record> records, double q_effective) {
  if (records.empty()) throw precondition_error("mhat_q: empty campaign");
  if (!(q_effective > 0.0)) throw precondition_error("mhat_q: q_effective must be > 0");
  double unsafe_sum = 0.0;
  double safe_sum = 0.0;
  std::vector<std::string> missing;
  for (const auto& r : records) {
    if (r.is_unsafe() || (r.is_safe() && r.is_sampled())) {
      if (!r.m_final) {
        missing.push_back(r.dop_id);
        continue;
      }
      (r.is_unsafe() ? unsafe_sum : safe_sum) += static_cast<double>(*r.m_final);
    }
  }
  if (!missing.empty())
    throw precondition_error("mhat_q: records lack ground truth: " + detail::join_ids(missing));
  return (unsafe_sum + safe_sum / q_effective) / static_cast<double>(records.size());
}

/// D_i = (K_i - M_i) / m_hat for every unsafe and every sampled safe record.
/// Non-sampled safe records yield no value. `q_effective` only sets the
/// reported weight of safe values.
inline std::vector<relative_difference> relative_differences(std::span<const dop_record> records,
                                                             double m_hat,
                                                             double q_effective = 1.0) {
  if (!(m_hat > 0.0))
    throw precondition_error("relative_differences: mean manual count must be > 0 "
                             "(campaign without boarding passengers)");
  std::vector<relative_difference> out;
  for (const auto& r : records) {
    const bool evaluable = r.is_unsafe() || (r.is_safe() && r.is_sampled());
    if (!evaluable) continue;
    if (!r.m_final)
      throw precondition_error("relative_differences: record " + r.dop_id +
                               " lacks ground truth");
    const double d = static_cast<double>(r.k_auto - *r.m_final) / m_hat;
    out.push_back({r.dop_id, d, r.label, r.is_safe() ? 1.0 / q_effective : 1.0});
  }
  return out;
}

/// Stratum means, empirical sigmas and realized quota of a stratified sample.
inline partition_stats summarize(const stratified_sample& s) {
  partition_stats st;
  st.n_s = s.n_safe;
  st.n_u = s.unsafe.size();
  st.n = s.n();
  st.n_s_counted = s.safe_counted.size();
  st.q_effective = s.n_safe > 0 ? static_cast<double>(s.safe_counted.size()) /
                                      static_cast<double>(s.n_safe)
                                : 1.0;
  st.d_bar_s = detail::mean(s.safe_counted);
  st.d_bar_u = detail::mean(s.unsafe);
  const auto sd_s = detail::sample_sd(s.safe_counted);
  const auto sd_u = detail::sample_sd(s.unsafe);
  st.nu_hat_s = sd_s.value_or(0.0);
  st.nu_hat_u = sd_u.value_or(0.0);
  st.degenerate_s = s.n_safe > 0 && !sd_s;
  st.degenerate_u = !s.unsafe.empty() && !sd_u;
  return st;
}

/// Composite point estimate (N_s/n) * mean(sampled safe D) + (N_u/n) * mean(unsafe D).
inline double dhat_q(const partition_stats& st) {
  if (st.n == 0) throw precondition_error("dhat_q: n must be > 0");
  const double n = static_cast<double>(st.n);
  return static_cast<double>(st.n_s) / n * st.d_bar_s +
         static_cast<double>(st.n_u) / n * st.d_bar_u;
}

/// Pooled variance of the partitioned test:
///   (N_s/n) max(nu_s, nu_min)^2 / q + (N_u/n) max(nu_u, nu_min)^2
///   + (N_s N_u / n^2) (D_s - D_u)^2
/// with q the realized quota. Degenerate strata use nu_min.
inline pooled_variance_result pooled_variance(const partition_stats& st, double nu_min) {
  if (!(st.q_effective > 0.0)) throw precondition_error("pooled_variance: q_effective must be > 0");
  if (st.n == 0) throw precondition_error("pooled_variance: n must be > 0");
  pooled_variance_result r;
  const double n = static_cast<double>(st.n);
  const double ns = static_cast<double>(st.n_s);
  const double nu = static_cast<double>(st.n_u);
  double sigma_s = st.degenerate_s ? 0.0 : st.nu_hat_s;
  double sigma_u = st.degenerate_u ? 0.0 : st.nu_hat_u;
  if (st.n_s > 0 && (st.degenerate_s || sigma_s < nu_min)) {
    sigma_s = nu_min;
    r.clamped_s = true;
  }
  if (st.n_u > 0 && (st.degenerate_u || sigma_u < nu_min)) {
    sigma_u = nu_min;
    r.clamped_u = true;
  }
  const double gap = st.d_bar_s - st.d_bar_u;
  r.variance = ns / n * sigma_s * sigma_s / st.q_effective + nu / n * sigma_u * sigma_u +
               ns * nu / (n * n) * gap * gap;
  return r;
}

/// [d_hat - z sigma / sqrt(n), d_hat + z sigma / sqrt(n)] with z = z_{1-alpha/2}.
inline confidence_interval_t confidence_interval(double d_hat, double nu_hat, std::size_t n,
                                                 double alpha) {
  if (n == 0) throw precondition_error("confidence_interval: n must be >= 1");
  if (!(nu_hat >= 0.0)) throw precondition_error("confidence_interval: nu_hat must be >= 0");
  const double half = two_sided_z(alpha) * nu_hat / std::sqrt(static_cast<double>(n));
  return {d_hat - half, d_hat + half};
}

/// Pass iff the interval lies inside the closed band [-delta, +delta].
inline verdict equivalence_verdict(const confidence_interval_t& ci, double delta) {
  return (ci.low >= -delta - boundary_tolerance && ci.high <= delta + boundary_tolerance)
             ? verdict::pass
             : verdict::fail;
}

namespace detail {

inline void finish(evaluation_report& rep, const test_params& params) {
  rep.delta = params.delta;
  rep.alpha = params.alpha;
  rep.z = two_sided_z(params.alpha);
  rep.params = params;
  const auto ci = confidence_interval(rep.d_hat, rep.nu_hat, rep.n, params.alpha);
  rep.ci_low = ci.low;
  rep.ci_high = ci.high;
  rep.result = equivalence_verdict(ci, params.delta);
}

/// Single-stratum evaluation: mean, clamped empirical sigma, interval.
inline evaluation_report evaluate_pooled(std::span<const double> d, const test_params& params) {
  if (d.empty()) throw precondition_error("evaluation needs at least one record");
  evaluation_report rep;
  rep.test = test_kind::classic;
  rep.n = d.size();
  rep.d_hat = mean(d);
  const auto sd = sample_sd(d);
  double sigma = sd.value_or(0.0);
  if (!sd) rep.warnings.emplace_back("degenerate stratum: fewer than 2 counted records, sigma set to nu_min");
  if (!sd || sigma < params.nu_min) {
    sigma = params.nu_min;
    rep.clamped_u = true;
  }
  rep.nu_hat = sigma;
  rep.stats.n = rep.n;
  rep.stats.n_u = rep.n;
  rep.stats.q_effective = 1.0;
  rep.stats.d_bar_u = rep.d_hat;
  rep.stats.nu_hat_u = sd.value_or(0.0);
  rep.stats.degenerate_u = !sd;
  finish(rep, params);
  return rep;
}

}  // namespace detail

/// Classic test on precomputed relative differences (one stratum, fully counted).
inline evaluation_report evaluate_classic_values(std::span<const double> d,
                                                 const test_params& params) {
  params.validate();
  return detail::evaluate_pooled(d, params);
}

/// Partitioned test on precomputed relative differences.
///
/// When every safe record is counted (realized quota 1, or no safe stratum)
/// the partition carries no sampling information and the test reduces to the
/// classic evaluation over all values; the stratum statistics are still
/// reported.
inline evaluation_report evaluate_stratified(const stratified_sample& s, const test_params& params,
                                             std::optional<double> q_planned = std::nullopt) {
  params.validate();
  if (s.n() == 0) throw precondition_error("evaluation needs at least one record");
  if (s.n_safe > 0 && s.safe_counted.empty())
    throw precondition_error("safe partition is non-empty but no safe record was sampled");
  if (s.safe_counted.size() > s.n_safe)
    throw precondition_error("more sampled safe values than safe records");

  const partition_stats st = summarize(s);
  evaluation_report rep;
  if (st.n_s_counted == st.n_s) {
    std::vector<double> all;
    all.reserve(st.n_s + st.n_u);
    all.insert(all.end(), s.safe_counted.begin(), s.safe_counted.end());
    all.insert(all.end(), s.unsafe.begin(), s.unsafe.end());
    rep = detail::evaluate_pooled(all, params);
    rep.clamped_s = st.n_s > 0 && rep.clamped_u;
    rep.clamped_u = st.n_u > 0 && rep.clamped_u;
    if (st.n_s > 0 && st.n_u > 0)
      rep.warnings.emplace_back("full count of the safe partition: evaluated as the classic test");
  } else {
    rep.n = st.n;
    rep.d_hat = dhat_q(st);
    const auto pv = pooled_variance(st, params.nu_min);
    rep.nu_hat = std::sqrt(pv.variance);
    rep.clamped_s = pv.clamped_s;
    rep.clamped_u = pv.clamped_u;
    if (st.degenerate_s)
      rep.warnings.emplace_back("degenerate safe stratum: fewer than 2 counted records, sigma set to nu_min");
    if (st.degenerate_u)
      rep.warnings.emplace_back("degenerate unsafe stratum: fewer than 2 records, sigma set to nu_min");
    detail::finish(rep, params);
  }
  rep.test = test_kind::partitioned;
  rep.stats = st;
  rep.q_planned = q_planned;
  return rep;
}

/// Classic equivalence test over fully counted records.
inline evaluation_report evaluate_classic(std::span<const dop_record> records,
                                          const test_params& params) {
  params.validate();
  if (records.empty()) throw precondition_error("evaluate_classic: empty campaign");
  std::vector<std::string> missing;
  double m_sum = 0.0;
  for (const auto& r : records) {
    if (!r.m_final) missing.push_back(r.dop_id);
    else m_sum += static_cast<double>(*r.m_final);
  }
  if (!missing.empty())
    throw precondition_error("evaluate_classic: records lack ground truth: " +
                             detail::join_ids(missing));
  const double m_bar = m_sum / static_cast<double>(records.size());
  if (!(m_bar > 0.0))
    throw precondition_error("evaluate_classic: mean manual count is 0 (no boarding passengers)");

  std::vector<relative_difference> details;
  std::vector<double> d;
  details.reserve(records.size());
  d.reserve(records.size());
  for (const auto& r : records) {
    const double v = static_cast<double>(r.k_auto - *r.m_final) / m_bar;
    details.push_back({r.dop_id, v, r.label, 1.0});
    d.push_back(v);
  }
  auto rep = detail::evaluate_pooled(d, params);
  rep.stats.m_hat_q = m_bar;
  rep.details = std::move(details);
  return rep;
}

/// Partitioned equivalence test: realized quota from the data, leave-q-out
/// mean count, relative differences, stratified estimate and interval.
inline evaluation_report evaluate_partitioned(std::span<const dop_record> records,
                                              const test_params& params,
                                              std::optional<double> q_planned = std::nullopt) {
  params.validate();
  if (records.empty()) throw precondition_error("evaluate_partitioned: empty campaign");

  std::vector<std::string> unlabeled, unsafe_missing, undetermined, sampled_missing;
  std::size_t n_s = 0, n_s_sampled = 0;
  for (const auto& r : records) {
    switch (r.label) {
      case partition_label::unlabeled: unlabeled.push_back(r.dop_id); break;
      case partition_label::unsafe:
        if (!r.m_final) unsafe_missing.push_back(r.dop_id);
        break;
      case partition_label::safe:
        ++n_s;
        if (!r.sampled) undetermined.push_back(r.dop_id);
        else if (*r.sampled) {
          ++n_s_sampled;
          if (!r.m_final) sampled_missing.push_back(r.dop_id);
        }
        break;
    }
  }
  std::string problems;
  auto add = [&](const char* what, const std::vector<std::string>& ids) {
    if (ids.empty()) return;
    if (!problems.empty()) problems += "; ";
    problems += std::string(what) + ": " + detail::join_ids(ids);
  };
  add("unlabeled records", unlabeled);
  add("unsafe records lack ground truth", unsafe_missing);
  add("safe records with undetermined sampling", undetermined);
  add("sampled safe records lack ground truth", sampled_missing);
  if (!problems.empty()) throw precondition_error("evaluate_partitioned: " + problems);
  if (n_s > 0 && n_s_sampled == 0)
    throw precondition_error("evaluate_partitioned: safe partition is non-empty but no record was sampled");

  const double q_eff =
      n_s > 0 ? static_cast<double>(n_s_sampled) / static_cast<double>(n_s) : 1.0;
  const double m_hat = mhat_q(records, q_eff);
  auto details = relative_differences(records, m_hat, q_eff);

  stratified_sample s;
  s.n_safe = n_s;
  for (const auto& rd : details)
    (rd.stratum == partition_label::safe ? s.safe_counted : s.unsafe).push_back(rd.d);

  auto rep = evaluate_stratified(s, params, q_planned);
  rep.stats.m_hat_q = m_hat;
  rep.details = std::move(details);
  if (q_planned && std::abs(*q_planned - q_eff) > 1e-9)
    rep.warnings.push_back("realized quota " + std::to_string(q_eff) + " differs from planned " +
                           std::to_string(*q_planned));
  return rep;
}

}  // namespace apcval

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace apcval {

inline constexpr const char* toolkit_version = "0.1.0";

using count_t = std::int64_t;

/// Raised when an input violates a precondition of an operation.
class precondition_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class partition_label { safe, unsafe, unlabeled };

inline std::string_view to_string(partition_label l) {
  switch (l) {
    case partition_label::safe: return "s";
    case partition_label::unsafe: return "u";
    case partition_label::unlabeled: return "";
  }
  return "";
}

/// One door opening phase (DOP).
///
/// `m_final` is the ground-truth manual count. `sampled` is the sampling
/// indicator of the safe partition; `std::nullopt` means undetermined.
struct dop_record {
  std::string dop_id;
  double duration_s = 0.0;
  std::optional<count_t> m1;
  std::optional<count_t> m2;
  std::optional<count_t> m_sup;
  std::optional<count_t> m_final;
  count_t k_auto = 0;
  std::optional<count_t> alg_count;
  std::optional<double> alg_confidence;
  partition_label label = partition_label::unlabeled;
  std::optional<bool> sampled;

  bool is_safe() const noexcept { return label == partition_label::safe; }
  bool is_unsafe() const noexcept { return label == partition_label::unsafe; }
  bool is_sampled() const noexcept { return sampled.value_or(false); }

  friend bool operator==(const dop_record&, const dop_record&) = default;
};

/// Returns one description per violated record invariant; empty when valid.
inline std::vector<std::string> validate_record(const dop_record& r) {
  std::vector<std::string> out;
  if (r.dop_id.empty()) out.emplace_back("dop_id: empty identifier");
  if (!(r.duration_s >= 0.0) || !std::isfinite(r.duration_s))
    out.emplace_back("duration_s: must be a finite value >= 0");
  auto non_negative = [&](const std::optional<count_t>& v, const char* name) {
    if (v && *v < 0) out.emplace_back(std::string(name) + ": count must be >= 0");
  };
  non_negative(r.m1, "m1");
  non_negative(r.m2, "m2");
  non_negative(r.m_sup, "m_sup");
  non_negative(r.m_final, "m_final");
  non_negative(r.alg_count, "alg_count");
  if (r.k_auto < 0) out.emplace_back("k_auto: count must be >= 0");
  if (r.alg_confidence && !(*r.alg_confidence >= 0.0 && *r.alg_confidence <= 1.0))
    out.emplace_back("alg_confidence: must lie in [0, 1]");
  if (r.m_final && !r.m1) out.emplace_back("m_final: present without m1");
  if (r.is_unsafe() && !r.m_final) out.emplace_back("unsafe record lacks ground truth");
  if (r.is_safe() && r.is_sampled() && !r.m_final)
    out.emplace_back("sampled safe record lacks ground truth");
  return out;
}

/// Ground truth from two manual counts with a supervisor tie-break.
/// Returns nullopt when the counts disagree and no supervisor count exists.
inline std::optional<count_t> ground_truth(std::optional<count_t> m1, std::optional<count_t> m2,
                                           std::optional<count_t> m_sup) {
  if (m1 && m2 && *m1 == *m2) return m1;
  if (m1 && m2 && m_sup) return m_sup;
  return std::nullopt;
}

/// Test risks, margin and planning variability.
struct test_params {
  double alpha = 0.05;   // total user risk, two-sided z_{1-alpha/2}
  double beta = 0.05;    // manufacturer risk
  double delta = 0.01;   // equivalence margin
  double nu = 0.15;      // planning relative standard deviation
  double nu_min = 0.03;  // floor on empirical standard deviations
  double buffer = 1.15;  // sample size buffer factor

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw precondition_error("alpha must lie in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) throw precondition_error("beta must lie in (0, 1)");
    if (!(delta > 0.0)) throw precondition_error("delta must be > 0");
    if (!(nu >= 0.0)) throw precondition_error("nu must be >= 0");
    if (!(nu_min >= 0.0)) throw precondition_error("nu_min must be >= 0");
    if (!(buffer >= 1.0)) throw precondition_error("buffer must be >= 1");
  }
};

struct partition_params {
  double p_s = 0.9;          // expected safe share
  double nu_s_ratio = 0.35;  // nu_s / nu
  double q = 0.175;          // counted quota of the safe partition

  double p_u() const noexcept { return 1.0 - p_s; }

  void validate() const {
    if (!(p_s >= 0.0 && p_s <= 1.0)) throw precondition_error("p_s must lie in [0, 1]");
    if (!(nu_s_ratio >= 0.0)) throw precondition_error("nu_s_ratio must be >= 0");
    if (!(q > 0.0 && q <= 1.0)) throw precondition_error("q must lie in (0, 1]");
  }
};

/// Mean per-DOP costs: unsafe combined, safe basic, safe counting.
struct cost_params {
  double c_u = 0.0;
  double c_s0 = 0.0;
  double c_sZ = 0.0;

  void validate(bool for_optimization = false) const {
    if (!(c_u >= 0.0 && c_s0 >= 0.0 && c_sZ >= 0.0))
      throw precondition_error("cost parameters must be >= 0");
    if (for_optimization && !(c_u > 0.0))
      throw precondition_error("c_u must be > 0 for quota optimization");
  }
};

/// Rates that turn video durations into counting costs.
struct cost_rates {
  double r_av = 0.7;             // labor time / video time
  double c_labor = 20.0;         // per hour
  double r_s = 1.2;              // second count and supervisor surcharge
  double recording_cost = 0.0;   // flat per-record cost added to both strata

  void validate() const {
    if (!(r_av > 0.0)) throw precondition_error("r_av must be > 0");
    if (!(c_labor >= 0.0)) throw precondition_error("c_labor must be >= 0");
    if (!(r_s >= 0.0)) throw precondition_error("r_s must be >= 0");
    if (!(recording_cost >= 0.0)) throw precondition_error("recording_cost must be >= 0");
  }
};

/// Per-stratum summary of an evaluated campaign.
struct partition_stats {
  std::size_t n = 0;
  std::size_t n_s = 0;
  std::size_t n_u = 0;
  std::size_t n_s_counted = 0;
  double q_effective = 1.0;
  double d_bar_s = 0.0;
  double d_bar_u = 0.0;
  double nu_hat_s = 0.0;
  double nu_hat_u = 0.0;
  double m_hat_q = 0.0;
  // Fewer than two counted values: no empirical sigma exists for the stratum.
  bool degenerate_s = false;
  bool degenerate_u = false;
};

}  // namespace apcval

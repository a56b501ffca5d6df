#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "apcval/classify.hpp"
#include "apcval/domain.hpp"
#include "apcval/estimator.hpp"
#include "apcval/normal.hpp"

namespace apcval {

/// Probability that |D| <= delta - z nu / sqrt(n) for D ~ N(mu, nu^2 / n).
inline double analytic_success(double mu, double nu, double n, double alpha, double delta) {
  if (!(nu > 0.0)) throw precondition_error("analytic_success: nu must be > 0");
  if (!(n >= 1.0)) throw precondition_error("analytic_success: n must be >= 1");
  const double z = two_sided_z(alpha);
  const double rn = std::sqrt(n) / nu;
  const double p = normal_cdf((delta - mu) * rn - z) + normal_cdf((delta + mu) * rn - z) - 1.0;
  return std::max(0.0, p);
}

enum class error_model_kind { normal, empirical };

inline std::string_view to_string(error_model_kind k) {
  return k == error_model_kind::normal ? "normal" : "empirical";
}

/// Per-stratum error distribution of D.
///
/// normal:    D ~ N(mu_s, nu_s^2) on safe and N(mu_u, nu_u^2) on unsafe records,
///            with mu_s = mu + p_u gap and mu_u = mu - p_s gap.
/// empirical: D is drawn with replacement from the stratum pool and shifted
///            by mu - (p_s mean(pool_s) + p_u mean(pool_u)).
struct error_model {
  error_model_kind kind = error_model_kind::normal;
  double nu_s = 0.0;
  double nu_u = 0.15;
  double gap = 0.0;
  std::vector<double> pool_s;
  std::vector<double> pool_u;
};

enum class grid_axis { n, mu };

struct sim_config {
  error_model model;
  std::vector<double> bias_sweep{0.0};
  std::vector<std::size_t> n_values{100};
  std::size_t trials = 10000;
  test_kind test = test_kind::classic;
  test_params params;
  // p_s drives the Bernoulli stratum draws of both tests; q only the partitioned one.
  partition_params partition{0.0, 0.0, 1.0};
  std::uint64_t seed = 1;
  grid_axis axis = grid_axis::n;

  void validate() const {
    params.validate();
    partition.validate();
    if (trials < 1) throw precondition_error("simulate: trials must be >= 1");
    if (n_values.empty()) throw precondition_error("simulate: n grid is empty");
    if (bias_sweep.empty()) throw precondition_error("simulate: bias sweep is empty");
    for (auto n : n_values)
      if (n < 2) throw precondition_error("simulate: every n must be >= 2");
    if (model.kind == error_model_kind::normal) {
      if (!(model.nu_s >= 0.0 && model.nu_u >= 0.0))
        throw precondition_error("simulate: stratum sigmas must be >= 0");
    } else {
      if (partition.p_s > 0.0 && model.pool_s.empty())
        throw precondition_error("simulate: empty resample pool for the safe stratum");
      if (partition.p_s < 1.0 && model.pool_u.empty())
        throw precondition_error("simulate: empty resample pool for the unsafe stratum");
    }
  }
};

struct success_point {
  std::string grid_var;
  double grid_value = 0.0;
  double pass_rate = 0.0;
  double mc_se = 0.0;
  std::optional<double> analytic;
  std::size_t passes = 0;
  std::size_t trials = 0;
};

struct success_curve {
  std::string series;  // the fixed coordinate, e.g. "mu=0.01"
  std::vector<success_point> points;
};

/// Relative differences of one simulated campaign before sampling.
struct trial_data {
  std::vector<double> safe;
  std::vector<double> unsafe;
};

namespace detail {

inline double pool_mean(const std::vector<double>& pool) {
  return mean(std::span<const double>(pool));
}

inline std::string series_label(const char* var, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s=%.12g", var, v);
  return buf;
}

}  // namespace detail

/// Draws stratum labels by Bernoulli(p_s) and one D value per record.
inline trial_data generate_trial_data(const error_model& model, const partition_params& part,
                                      double mu, std::size_t n, rng_t& gen) {
  trial_data t;
  std::bernoulli_distribution is_safe(part.p_s);
  if (model.kind == error_model_kind::normal) {
    std::normal_distribution<double> ds(mu + part.p_u() * model.gap, model.nu_s);
    std::normal_distribution<double> du(mu - part.p_s * model.gap, model.nu_u);
    for (std::size_t i = 0; i < n; ++i) {
      if (is_safe(gen)) t.safe.push_back(ds(gen));
      else t.unsafe.push_back(du(gen));
    }
    return t;
  }
  const double base = part.p_s * (model.pool_s.empty() ? 0.0 : detail::pool_mean(model.pool_s)) +
                      part.p_u() * (model.pool_u.empty() ? 0.0 : detail::pool_mean(model.pool_u));
  const double shift = mu - base;
  auto draw = [&](const std::vector<double>& pool) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(gen)] + shift;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (is_safe(gen)) t.safe.push_back(draw(model.pool_s));
    else t.unsafe.push_back(draw(model.pool_u));
  }
  return t;
}

/// Keeps the safe values selected by draw_sample(N_s, q0, seed).
inline stratified_sample sample_trial(const trial_data& t, double q0, std::uint64_t seed) {
  stratified_sample s;
  s.n_safe = t.safe.size();
  s.unsafe = t.unsafe;
  if (t.safe.empty()) return s;
  const auto z = draw_sample(t.safe.size(), q0, seed);
  for (std::size_t k = 0; k < t.safe.size(); ++k)
    if (z[k]) s.safe_counted.push_back(t.safe[k]);
  return s;
}

/// Seed of trial `trial` at grid point `grid_index`.
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t grid_index, std::uint64_t trial) {
  return derive_seed(derive_seed(seed, grid_index), trial);
}

/// Runs one simulated campaign end to end and returns the verdict.
inline verdict run_trial(const sim_config& cfg, double mu, std::size_t n, std::uint64_t seed) {
  rng_t gen(derive_seed(seed, 0));
  const auto data = generate_trial_data(cfg.model, cfg.partition, mu, n, gen);
  if (cfg.test == test_kind::classic) {
    std::vector<double> all;
    all.reserve(n);
    all.insert(all.end(), data.safe.begin(), data.safe.end());
    all.insert(all.end(), data.unsafe.begin(), data.unsafe.end());
    return detail::evaluate_pooled(all, cfg.params).result;
  }
  const auto s = sample_trial(data, cfg.partition.q, derive_seed(seed, 1));
  return evaluate_stratified(s, cfg.params).result;
}

/// Analytic pass probability under the normal model; nullopt for empirical pools.
inline std::optional<double> analytic_for(const sim_config& cfg, double mu, std::size_t n) {
  if (cfg.model.kind != error_model_kind::normal) return std::nullopt;
  const double q = cfg.test == test_kind::classic ? 1.0 : cfg.partition.q;
  const double ps = cfg.partition.p_s, pu = cfg.partition.p_u();
  const double v = ps * cfg.model.nu_s * cfg.model.nu_s / q + pu * cfg.model.nu_u * cfg.model.nu_u +
                   ps * pu * cfg.model.gap * cfg.model.gap;
  if (!(v > 0.0)) return std::nullopt;
  return analytic_success(mu, std::sqrt(v), static_cast<double>(n), cfg.params.alpha,
                          cfg.params.delta);
}

/// Monte Carlo pass rates over the (bias, n) grid. Returns one curve per
/// bias value when the axis is n, one per n when the axis is mu.
inline std::vector<success_curve> run_simulation(const sim_config& cfg) {
  cfg.validate();
  const std::size_t nn = cfg.n_values.size();
  auto point = [&](std::size_t bi, std::size_t ni) {
    const double mu = cfg.bias_sweep[bi];
    const std::size_t n = cfg.n_values[ni];
    const std::uint64_t grid_index = bi * nn + ni;
    success_point p;
    p.grid_var = cfg.axis == grid_axis::n ? "n" : "mu";
    p.grid_value = cfg.axis == grid_axis::n ? static_cast<double>(n) : mu;
    p.trials = cfg.trials;
    for (std::size_t t = 0; t < cfg.trials; ++t)
      if (run_trial(cfg, mu, n, trial_seed(cfg.seed, grid_index, t)) == verdict::pass) ++p.passes;
    p.pass_rate = static_cast<double>(p.passes) / static_cast<double>(p.trials);
    p.mc_se = std::sqrt(p.pass_rate * (1.0 - p.pass_rate) / static_cast<double>(p.trials));
    p.analytic = analytic_for(cfg, mu, n);
    return p;
  };

  std::vector<success_curve> curves;
  if (cfg.axis == grid_axis::n) {
    for (std::size_t bi = 0; bi < cfg.bias_sweep.size(); ++bi) {
      success_curve c{detail::series_label("mu", cfg.bias_sweep[bi]), {}};
      for (std::size_t ni = 0; ni < nn; ++ni) c.points.push_back(point(bi, ni));
      curves.push_back(std::move(c));
    }
  } else {
    for (std::size_t ni = 0; ni < nn; ++ni) {
      success_curve c{detail::series_label("n", static_cast<double>(cfg.n_values[ni])), {}};
      for (std::size_t bi = 0; bi < cfg.bias_sweep.size(); ++bi) c.points.push_back(point(bi, ni));
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

struct risk_row {
  std::size_t n = 0;
  double worst_pass_rate = 0.0;
  double mc_se = 0.0;
  double worst_mu = 0.0;
  double bound = 0.0;  // alpha / 2 + 4 mc_se
  bool exceeds = false;
};

/// Worst pass rate over the bias sweep for every n. Every swept bias must
/// satisfy |mu| >= delta, the region where passing is a user-risk event.
inline std::vector<risk_row> user_risk_audit(const sim_config& cfg) {
  for (double mu : cfg.bias_sweep)
    if (std::abs(mu) < cfg.params.delta - boundary_tolerance)
      throw precondition_error("user_risk_audit: bias sweep must satisfy |mu| >= delta");
  sim_config by_n = cfg;
  by_n.axis = grid_axis::n;
  const auto curves = run_simulation(by_n);
  std::vector<risk_row> rows;
  for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
    risk_row r;
    r.n = cfg.n_values[ni];
    bool first = true;
    for (std::size_t bi = 0; bi < curves.size(); ++bi) {
      const auto& p = curves[bi].points[ni];
      if (first || p.pass_rate > r.worst_pass_rate) {
        r.worst_pass_rate = p.pass_rate;
        r.mc_se = p.mc_se;
        r.worst_mu = cfg.bias_sweep[bi];
        first = false;
      }
    }
    r.bound = cfg.params.alpha / 2.0 + 4.0 * r.mc_se;
    r.exceeds = r.worst_pass_rate > r.bound;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace apcval

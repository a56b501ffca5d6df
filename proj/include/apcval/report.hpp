#pragma once

#include <cmath>
#include <cstdio>
#include <ctime>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apcval/classify.hpp"
#include "apcval/cost.hpp"
#include "apcval/domain.hpp"
#include "apcval/estimator.hpp"
#include "apcval/io.hpp"
#include "apcval/planner.hpp"
#include "apcval/simulate.hpp"

namespace apcval {

using json = nlohmann::ordered_json;

enum class report_format { json, csv };

/// Rounds to 12 significant digits, the precision of every emitted float.
inline double round12(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline json num(double v) { return round12(v); }

template <class T>
json opt_num(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_floating_point_v<T>) return round12(*v);
  else return *v;
}

inline std::optional<double> get_opt_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

/// Common header of every report.
inline json report_envelope(std::string_view type, std::optional<std::uint64_t> seed) {
  json j;
  j["toolkit_version"] = toolkit_version;
  j["report_type"] = std::string(type);
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["timestamp"] = utc_timestamp();
  return j;
}

inline json to_json(const test_params& p) {
  return {{"alpha", detail::num(p.alpha)},   {"beta", detail::num(p.beta)},
          {"delta", detail::num(p.delta)},   {"nu", detail::num(p.nu)},
          {"nu_min", detail::num(p.nu_min)}, {"buffer", detail::num(p.buffer)}};
}

inline test_params test_params_from_json(const json& j) {
  test_params p;
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.delta = j.at("delta").get<double>();
  p.nu = j.at("nu").get<double>();
  p.nu_min = j.at("nu_min").get<double>();
  p.buffer = j.at("buffer").get<double>();
  return p;
}

inline json to_json(const partition_params& p) {
  return {{"p_s", detail::num(p.p_s)}, {"nu_s_ratio", detail::num(p.nu_s_ratio)}, {"q", detail::num(p.q)}};
}

inline partition_params partition_params_from_json(const json& j) {
  return {j.at("p_s").get<double>(), j.at("nu_s_ratio").get<double>(), j.at("q").get<double>()};
}

inline json to_json(const cost_params& c) {
  return {{"c_u", detail::num(c.c_u)}, {"c_s0", detail::num(c.c_s0)}, {"c_sZ", detail::num(c.c_sZ)}};
}

inline cost_params cost_params_from_json(const json& j) {
  return {j.at("c_u").get<double>(), j.at("c_s0").get<double>(), j.at("c_sZ").get<double>()};
}

inline json to_json(const cost_rates& r) {
  return {{"r_av", detail::num(r.r_av)},
          {"c_labor", detail::num(r.c_labor)},
          {"r_s", detail::num(r.r_s)},
          {"recording_cost", detail::num(r.recording_cost)}};
}

inline json to_json(const partition_stats& s) {
  return {{"n", s.n},
          {"n_s", s.n_s},
          {"n_u", s.n_u},
          {"n_s_counted", s.n_s_counted},
          {"q_effective", detail::num(s.q_effective)},
          {"d_bar_s", detail::num(s.d_bar_s)},
          {"d_bar_u", detail::num(s.d_bar_u)},
          {"nu_hat_s", detail::num(s.nu_hat_s)},
          {"nu_hat_u", detail::num(s.nu_hat_u)},
          {"m_hat_q", detail::num(s.m_hat_q)},
          {"degenerate_s", s.degenerate_s},
          {"degenerate_u", s.degenerate_u}};
}

inline partition_stats partition_stats_from_json(const json& j) {
  partition_stats s;
  s.n = j.at("n").get<std::size_t>();
  s.n_s = j.at("n_s").get<std::size_t>();
  s.n_u = j.at("n_u").get<std::size_t>();
  s.n_s_counted = j.at("n_s_counted").get<std::size_t>();
  s.q_effective = j.at("q_effective").get<double>();
  s.d_bar_s = j.at("d_bar_s").get<double>();
  s.d_bar_u = j.at("d_bar_u").get<double>();
  s.nu_hat_s = j.at("nu_hat_s").get<double>();
  s.nu_hat_u = j.at("nu_hat_u").get<double>();
  s.m_hat_q = j.at("m_hat_q").get<double>();
  s.degenerate_s = j.at("degenerate_s").get<bool>();
  s.degenerate_u = j.at("degenerate_u").get<bool>();
  return s;
}

inline json to_json(const std::vector<row_violation>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back({{"line", x.line}, {"dop_id", x.dop_id}, {"message", x.message}});
  return a;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline json to_json(const evaluation_report& r, bool with_details = false) {
  json j;
  j["test"] = std::string(to_string(r.test));
  j["verdict"] = std::string(to_string(r.result));
  j["d_hat"] = detail::num(r.d_hat);
  j["nu_hat"] = detail::num(r.nu_hat);
  j["n"] = r.n;
  j["ci_low"] = detail::num(r.ci_low);
  j["ci_high"] = detail::num(r.ci_high);
  j["delta"] = detail::num(r.delta);
  j["alpha"] = detail::num(r.alpha);
  j["z"] = detail::num(r.z);
  j["clamped_s"] = r.clamped_s;
  j["clamped_u"] = r.clamped_u;
  j["q_planned"] = detail::opt_num(r.q_planned);
  j["stats"] = to_json(r.stats);
  j["params"] = to_json(r.params);
  j["warnings"] = r.warnings;
  if (with_details) {
    json d = json::array();
    for (const auto& x : r.details)
      d.push_back({{"dop_id", x.dop_id},
                   {"D_i", detail::num(x.d)},
                   {"stratum", std::string(to_string(x.stratum))},
                   {"weight", detail::num(x.weight)}});
    j["details"] = std::move(d);
  }
  return j;
}

/// Reads back the fields written by to_json(evaluation_report).
inline evaluation_report evaluation_report_from_json(const json& j) {
  evaluation_report r;
  r.test = j.at("test").get<std::string>() == "classic" ? test_kind::classic : test_kind::partitioned;
  r.result = j.at("verdict").get<std::string>() == "pass" ? verdict::pass : verdict::fail;
  r.d_hat = j.at("d_hat").get<double>();
  r.nu_hat = j.at("nu_hat").get<double>();
  r.n = j.at("n").get<std::size_t>();
  r.ci_low = j.at("ci_low").get<double>();
  r.ci_high = j.at("ci_high").get<double>();
  r.delta = j.at("delta").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.z = j.at("z").get<double>();
  r.clamped_s = j.at("clamped_s").get<bool>();
  r.clamped_u = j.at("clamped_u").get<bool>();
  r.q_planned = detail::get_opt_double(j, "q_planned");
  r.stats = partition_stats_from_json(j.at("stats"));
  r.params = test_params_from_json(j.at("params"));
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (j.contains("details")) {
    for (const auto& d : j.at("details")) {
      const auto s = d.at("stratum").get<std::string>();
      r.details.push_back({d.at("dop_id").get<std::string>(), d.at("D_i").get<double>(),
                           s == "s" ? partition_label::safe : partition_label::unsafe,
                           d.at("weight").get<double>()});
    }
  }
  return r;
}

/// Spreadsheet-friendly per-record table: dop_id, D_i, stratum, weight.
inline void write_details_csv(std::ostream& out, const std::vector<relative_difference>& details) {
  out << "dop_id,D_i,stratum,weight\n";
  for (const auto& x : details)
    out << detail::csv_escape(x.dop_id) << ',' << detail::format_double(x.d) << ','
        << to_string(x.stratum) << ',' << detail::format_double(x.weight) << '\n';
}

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

inline json to_json(const plan& p) {
  json j;
  j["n_e"] = p.n_e;
  j["n_rec"] = p.n_rec;
  j["q_planned"] = detail::num(p.q_planned);
  j["q_source"] = std::string(to_string(p.q_source));
  j["buffered_n_e"] = p.buffered_n_e;
  j["buffered_n_rec"] = p.buffered_n_rec;
  j["planning_nu"] = detail::num(p.planning_nu);
  j["params"] = to_json(p.params);
  j["partition"] = p.partition ? to_json(*p.partition) : json(nullptr);
  j["costs"] = p.costs ? to_json(*p.costs) : json(nullptr);
  j["cost_classic"] = detail::opt_num(p.cost_classic);
  j["cost_partitioned"] = detail::opt_num(p.cost_partitioned);
  j["warnings"] = p.warnings;
  return j;
}

inline plan plan_from_json(const json& j) {
  plan p;
  p.n_e = j.at("n_e").get<count_t>();
  p.n_rec = j.at("n_rec").get<count_t>();
  p.q_planned = j.at("q_planned").get<double>();
  const auto src = j.at("q_source").get<std::string>();
  p.q_source = src == "fixed" ? quota_source::fixed
               : src == "optimized" ? quota_source::optimized
                                    : quota_source::given;
  p.buffered_n_e = j.at("buffered_n_e").get<count_t>();
  p.buffered_n_rec = j.at("buffered_n_rec").get<count_t>();
  p.planning_nu = j.at("planning_nu").get<double>();
  p.params = test_params_from_json(j.at("params"));
  if (!j.at("partition").is_null()) p.partition = partition_params_from_json(j.at("partition"));
  if (!j.at("costs").is_null()) p.costs = cost_params_from_json(j.at("costs"));
  p.cost_classic = detail::get_opt_double(j, "cost_classic");
  p.cost_partitioned = detail::get_opt_double(j, "cost_partitioned");
  p.warnings = j.at("warnings").get<std::vector<std::string>>();
  return p;
}

inline json to_json(const optimal_quota_result& q) {
  return {{"q0", detail::num(q.q0)}, {"a", detail::num(q.a)}, {"b", detail::num(q.b)},
          {"capped", q.capped}, {"note", q.note}};
}

// ---------------------------------------------------------------------------
// Costs, classification
// ---------------------------------------------------------------------------

inline json to_json(const cost_breakdown& c, bool with_records = false) {
  json j;
  j["scheme"] = std::string(to_string(c.scheme));
  j["c_u"] = detail::num(c.c_u);
  j["c_s0"] = detail::num(c.c_s0);
  j["c_sZ"] = detail::num(c.c_sZ);
  j["n_s"] = c.n_s;
  j["n_u"] = c.n_u;
  j["warnings"] = c.warnings;
  if (with_records) {
    json a = json::array();
    for (const auto& r : c.per_record)
      a.push_back({{"dop_id", r.dop_id}, {"counting_cost", detail::num(r.counting_cost)}});
    j["per_record"] = std::move(a);
  }
  return j;
}

inline json to_json(const classifier_spec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"threshold", detail::opt_num(s.threshold)},
          {"target_share", detail::opt_num(s.target_share)},
          {"first_kind", std::string(to_string(s.first_kind))},
          {"rate_source", s.rate == rate_source::automatic ? "automatic" : "manual_then_auto"}};
}

inline json to_json(const partition_estimate& e) {
  return {{"p_s", detail::num(e.p_s)},   {"nu_s", detail::num(e.nu_s)},
          {"nu_u", detail::num(e.nu_u)}, {"mu_s", detail::num(e.mu_s)},
          {"mu_u", detail::num(e.mu_u)}, {"nu", detail::num(e.nu)},
          {"nu_s_ratio", detail::num(e.nu_s_ratio)}};
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

inline json to_json(const sim_config& c) {
  json j;
  j["error_model"] = std::string(to_string(c.model.kind));
  if (c.model.kind == error_model_kind::normal) {
    j["nu_s"] = detail::num(c.model.nu_s);
    j["nu_u"] = detail::num(c.model.nu_u);
    j["gap"] = detail::num(c.model.gap);
  } else {
    j["pool_s_size"] = c.model.pool_s.size();
    j["pool_u_size"] = c.model.pool_u.size();
  }
  json bias = json::array();
  for (double m : c.bias_sweep) bias.push_back(detail::num(m));
  j["bias_sweep"] = std::move(bias);
  j["n_values"] = c.n_values;
  j["trials"] = c.trials;
  j["test"] = std::string(to_string(c.test));
  j["params"] = to_json(c.params);
  j["partition"] = to_json(c.partition);
  j["seed"] = c.seed;
  j["assumptions"] = {"bias sweep applied as an additive shift of every drawn D value",
                      "stratum labels drawn by Bernoulli(p_s) per record"};
  return j;
}

inline json to_json(const std::vector<success_curve>& curves) {
  json a = json::array();
  for (const auto& c : curves) {
    json pts = json::array();
    for (const auto& p : c.points)
      pts.push_back({{"grid_var", p.grid_var},
                     {"grid_value", detail::num(p.grid_value)},
                     {"pass_rate", detail::num(p.pass_rate)},
                     {"mc_se", detail::num(p.mc_se)},
                     {"analytic", detail::opt_num(p.analytic)},
                     {"passes", p.passes},
                     {"trials", p.trials}});
    a.push_back({{"series", c.series}, {"points", std::move(pts)}});
  }
  return a;
}

inline json to_json(const std::vector<risk_row>& rows) {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"n", r.n},
                 {"worst_pass_rate", detail::num(r.worst_pass_rate)},
                 {"mc_se", detail::num(r.mc_se)},
                 {"worst_mu", detail::num(r.worst_mu)},
                 {"bound", detail::num(r.bound)},
                 {"exceeds", r.exceeds}});
  return a;
}

/// Columns grid_var, grid_value, pass_rate, mc_se, analytic, series.
/// A missing analytic value is an empty cell.
inline void write_success_csv(std::ostream& out, const std::vector<success_curve>& curves) {
  out << "grid_var,grid_value,pass_rate,mc_se,analytic,series\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << p.grid_var << ',' << detail::format_double(p.grid_value) << ','
          << detail::format_double(p.pass_rate) << ',' << detail::format_double(p.mc_se) << ','
          << (p.analytic ? detail::format_double(*p.analytic) : "") << ','
          << detail::csv_escape(c.series) << '\n';
}

// ---------------------------------------------------------------------------
// Generic emission
// ---------------------------------------------------------------------------

namespace detail {

inline void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
  } else if (j.is_null()) {
    out.emplace_back(prefix, "");
  } else if (j.is_string()) {
    out.emplace_back(prefix, j.get<std::string>());
  } else if (j.is_number_float()) {
    out.emplace_back(prefix, format_double(j.get<double>()));
  } else {
    out.emplace_back(prefix, j.dump());
  }
}

}  // namespace detail

/// Writes a report as indented JSON or as a two-column field,value table
/// with dotted field paths.
inline void emit_report(std::ostream& out, const json& report, report_format fmt) {
  if (fmt == report_format::json) {
    out << report.dump(2) << '\n';
    return;
  }
  std::vector<std::pair<std::string, std::string>> rows;
  detail::flatten(report, "", rows);
  out << "field,value\n";
  for (const auto& [k, v] : rows) out << detail::csv_escape(k) << ',' << detail::csv_escape(v) << '\n';
}

}  // namespace apcval

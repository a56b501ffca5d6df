#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "apcval/apcval.hpp"

namespace {

using namespace apcval;

struct common_options {
  std::string config_path;
  std::string campaign_path;
  std::string out_path;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::string format = "json";
};

void add_common(CLI::App* cmd, common_options& o, bool campaign) {
  cmd->add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  if (campaign)
    cmd->add_option("--campaign", o.campaign_path, "campaign CSV file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_path, "output path (default: standard output)");
  cmd->add_option("--set", o.settings, "override a configuration key: --set key=value");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_flag("--strict", o.strict, "treat campaign validation violations as errors");
  cmd->add_option("--format", o.format, "report format")->check(CLI::IsMember({"json", "csv"}));
}

run_config resolve_config(const common_options& o) {
  run_config cfg;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw io_error("cannot read config file " + o.config_path);
    cfg = parse_config(in);
  }
  for (const auto& s : o.settings) {
    const auto [k, v] = split_setting(s);
    apply_setting(cfg, k, v);
  }
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.explicit_keys["seed"] = std::to_string(*o.seed);
  }
  cfg.validate();
  return cfg;
}

json config_json(const run_config& cfg) {
  json j;
  j["test"] = to_json(cfg.test);
  j["partition"] = to_json(cfg.partition);
  j["classifier"] = to_json(cfg.classifier);
  j["rates"] = to_json(cfg.rates);
  j["scheme"] = std::string(to_string(cfg.scheme));
  if (auto c = cfg.cost_parameters()) j["costs"] = to_json(*c);
  j["explicit_keys"] = cfg.explicit_keys;
  return j;
}

report_format parse_format(const std::string& f) { return f == "csv" ? report_format::csv : report_format::json; }

/// Writes to --out when given, otherwise to standard output.
class output {
 public:
  explicit output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw io_error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

campaign read_campaign(const common_options& o) {
  auto c = load_campaign(o.campaign_path, o.strict);
  for (const auto& v : c.violations)
    std::cerr << "warning: line " << v.line << " (" << v.dop_id << "): " << v.message << '\n';
  return c;
}

void emit(const common_options& o, const json& report) {
  output out(o.out_path);
  emit_report(out.stream(), report, parse_format(o.format));
}

cost_breakdown campaign_costs(const run_config& cfg, const std::vector<dop_record>& records) {
  switch (cfg.scheme) {
    case cost_scheme::no_first_count: return costs_no_first_count(records, cfg.rates);
    case cost_scheme::with_first_count: return costs_with_first_count(records, cfg.rates);
    case cost_scheme::combined: {
      classifier_spec first = cfg.classifier;
      if (first.kind == classifier_kind::combined) first.kind = first.first_kind;
      const auto cls = combined_classify(records, first);
      return costs_combined(cls.records, cls.reclassified, cfg.rates);
    }
  }
  throw precondition_error("unknown cost scheme");
}

// ---------------------------------------------------------------------------

int run_plan(const common_options& o, bool optimize, std::optional<count_t> fixed_n_rec) {
  const auto cfg = resolve_config(o);
  plan_options opts;
  opts.optimize = optimize;
  opts.fixed_n_rec = fixed_n_rec;
  const auto pl = make_plan(cfg.test, cfg.partition, cfg.cost_parameters(), opts);
  auto j = report_envelope("plan", cfg.seed);
  j["config"] = config_json(cfg);
  j["plan"] = to_json(pl);
  emit(o, j);
  return 0;
}

int run_optimize(const common_options& o) {
  const auto cfg = resolve_config(o);
  auto j = report_envelope("optimize", cfg.seed);
  j["config"] = config_json(cfg);
  std::optional<cost_params> costs = cfg.cost_parameters();
  if (!o.campaign_path.empty()) {
    const auto c = read_campaign(o);
    const auto breakdown = campaign_costs(cfg, c.records);
    j["cost_breakdown"] = to_json(breakdown);
    costs = breakdown.params();
  }
  if (!costs)
    throw precondition_error("optimize needs costs.c_u, costs.c_s0, costs.c_sZ or a --campaign");
  costs->validate(true);
  const auto pl = make_plan(cfg.test, cfg.partition, costs, {true, std::nullopt});
  j["optimal_quota"] = to_json(optimal_quota(cfg.partition, pl.planning_nu, *costs));
  j["plan"] = to_json(pl);
  emit(o, j);
  return 0;
}

int run_classify(const common_options& o, const std::string& report_path) {
  const auto cfg = resolve_config(o);
  const auto c = read_campaign(o);
  const auto res = classify(c.records, cfg.classifier);
  {
    output out(o.out_path);
    write_campaign(out.stream(), res.records);
  }
  if (!report_path.empty()) {
    auto j = report_envelope("classify", cfg.seed);
    j["config"] = config_json(cfg);
    j["n"] = res.records.size();
    j["n_s"] = res.n_s;
    j["p_s_hat"] = round12(res.p_s_hat);
    std::size_t reclassified = 0;
    for (const auto& [id, w] : res.reclassified) reclassified += w ? 1 : 0;
    if (cfg.classifier.kind == classifier_kind::combined) j["n_reclassified"] = reclassified;
    j["violations"] = to_json(c.violations);
    output rep(report_path);
    emit_report(rep.stream(), j, parse_format(o.format));
  }
  return 0;
}

int run_sample(const common_options& o, const std::string& report_path) {
  const auto cfg = resolve_config(o);
  if (!cfg.seed) throw precondition_error("sample needs a seed (--seed or seed in the config)");
  auto c = read_campaign(o);
  const auto m = sample_campaign(c.records, cfg.partition.q, *cfg.seed);
  {
    output out(o.out_path);
    write_campaign(out.stream(), c.records);
  }
  if (!report_path.empty()) {
    auto j = report_envelope("sample", cfg.seed);
    j["config"] = config_json(cfg);
    std::size_t n_s = 0;
    for (const auto& r : c.records) n_s += r.is_safe() ? 1 : 0;
    j["n_s"] = n_s;
    j["n_sampled"] = m;
    j["q_effective"] = round12(static_cast<double>(m) / static_cast<double>(n_s));
    output rep(report_path);
    emit_report(rep.stream(), j, parse_format(o.format));
  }
  return 0;
}

int run_evaluate(const common_options& o, const std::string& test, const std::string& details_path,
                 bool embed_details) {
  const auto cfg = resolve_config(o);
  const auto c = read_campaign(o);
  std::optional<double> q_planned;
  if (cfg.explicit_keys.count("q")) q_planned = cfg.partition.q;
  const auto rep = test == "classic" ? evaluate_classic(c.records, cfg.test)
                                     : evaluate_partitioned(c.records, cfg.test, q_planned);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  auto j = report_envelope("evaluate", cfg.seed);
  j["config"] = config_json(cfg);
  j["campaign"] = o.campaign_path;
  j["violations"] = to_json(c.violations);
  j["evaluation"] = to_json(rep, embed_details);
  emit(o, j);
  if (!details_path.empty()) {
    output d(details_path);
    write_details_csv(d.stream(), rep.details);
  }
  return 0;
}

struct sim_options {
  std::size_t trials = 10000;
  std::vector<std::size_t> n_values{100, 200, 500, 1000, 2000};
  std::vector<double> mu_values{0.0, 0.005, 0.01};
  std::string model = "normal";
  std::string test = "classic";
  std::string axis = "n";
  std::string pool_path;
  bool audit = false;
};

int run_simulate(const common_options& o, const sim_options& so) {
  const auto cfg = resolve_config(o);
  sim_config sc;
  sc.trials = so.trials;
  sc.n_values = so.n_values;
  sc.bias_sweep = so.mu_values;
  sc.test = so.test == "classic" ? test_kind::classic : test_kind::partitioned;
  sc.params = cfg.test;
  sc.partition = cfg.partition;
  sc.seed = cfg.seed.value_or(1);
  sc.axis = so.axis == "mu" ? grid_axis::mu : grid_axis::n;
  if (so.model == "normal") {
    const double nu = cfg.test.nu;
    sc.model.nu_s = cfg.partition.nu_s_ratio * nu;
    const double rest = nu * nu - cfg.partition.p_s * sc.model.nu_s * sc.model.nu_s;
    if (rest < -1e-15) throw precondition_error("simulate: p_s nu_s^2 exceeds nu^2");
    sc.model.nu_u = cfg.partition.p_u() > 0.0 ? std::sqrt(std::max(0.0, rest) / cfg.partition.p_u()) : 0.0;
  } else {
    if (so.pool_path.empty()) throw precondition_error("simulate: empirical model needs --pool CAMPAIGN");
    const auto pool = load_campaign(so.pool_path, o.strict);
    const auto rep = evaluate_classic(pool.records, cfg.test);
    sc.model.kind = error_model_kind::empirical;
    for (const auto& d : rep.details) (d.stratum == partition_label::safe ? sc.model.pool_s : sc.model.pool_u).push_back(d.d);
    if (sc.model.pool_s.empty() && sc.model.pool_u.empty())
      throw precondition_error("simulate: empty resample pool");
    if (sc.model.pool_s.empty()) sc.partition.p_s = 0.0;
    if (sc.model.pool_u.empty()) sc.partition.p_s = 1.0;
  }

  auto j = report_envelope(so.audit ? "user_risk_audit" : "simulate", sc.seed);
  j["config"] = config_json(cfg);
  j["simulation"] = to_json(sc);
  if (so.audit) {
    j["audit"] = to_json(user_risk_audit(sc));
    emit(o, j);
    return 0;
  }
  const auto curves = run_simulation(sc);
  if (o.format == "csv") {
    output out(o.out_path);
    write_success_csv(out.stream(), curves);
    return 0;
  }
  j["curves"] = to_json(curves);
  emit(o, j);
  return 0;
}

int run_cost(const common_options& o, bool per_record) {
  const auto cfg = resolve_config(o);
  const auto c = read_campaign(o);
  const auto b = campaign_costs(cfg, c.records);
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << '\n';
  auto j = report_envelope("cost", cfg.seed);
  j["config"] = config_json(cfg);
  j["cost_breakdown"] = to_json(b, per_record);
  emit(o, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planning, evaluation and simulation of partitioned equivalence tests for APC validation"};
  app.set_version_flag("--version", std::string(toolkit_version));
  app.require_subcommand(1);

  common_options o;

  auto* plan_cmd = app.add_subcommand("plan", "sample and recorded size");
  add_common(plan_cmd, o, false);
  bool plan_optimize = false;
  std::optional<count_t> fixed_n_rec;
  plan_cmd->add_flag("--optimize", plan_optimize, "optimize q from costs.c_u, costs.c_s0, costs.c_sZ");
  plan_cmd->add_option("--n-rec", fixed_n_rec, "derive q from a fixed recorded size");

  auto* opt_cmd = app.add_subcommand("optimize", "cost-optimal quota");
  add_common(opt_cmd, o, false);
  opt_cmd->add_option("--campaign", o.campaign_path, "labeled campaign to derive costs from")
      ->check(CLI::ExistingFile);

  std::string report_path;
  auto* cls_cmd = app.add_subcommand("classify", "label records safe or unsafe");
  add_common(cls_cmd, o, true);
  cls_cmd->add_option("--report", report_path, "write a classification summary to this path");

  auto* smp_cmd = app.add_subcommand("sample", "draw the sampling indicators of the safe records");
  add_common(smp_cmd, o, true);
  smp_cmd->add_option("--report", report_path, "write a sampling summary to this path");

  std::string eval_test = "partitioned";
  std::string details_path;
  bool embed_details = false;
  auto* ev_cmd = app.add_subcommand("evaluate", "run the equivalence test on a campaign");
  add_common(ev_cmd, o, true);
  ev_cmd->add_option("--test", eval_test, "test variant")->check(CLI::IsMember({"classic", "partitioned"}));
  ev_cmd->add_option("--details", details_path, "write per-record dop_id,D_i,stratum,weight CSV");
  ev_cmd->add_flag("--embed-details", embed_details, "include per-record values in the report");

  sim_options so;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo test success rates");
  add_common(sim_cmd, o, false);
  sim_cmd->add_option("--trials", so.trials, "trials per grid point")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--n", so.n_values, "sample sizes")->delimiter(',');
  sim_cmd->add_option("--mu", so.mu_values, "true biases")->delimiter(',');
  sim_cmd->add_option("--model", so.model, "error model")->check(CLI::IsMember({"normal", "empirical"}));
  sim_cmd->add_option("--test", so.test, "test variant")->check(CLI::IsMember({"classic", "partitioned"}));
  sim_cmd->add_option("--axis", so.axis, "grid axis of each curve")->check(CLI::IsMember({"n", "mu"}));
  sim_cmd->add_option("--pool", so.pool_path, "labeled, counted campaign used as resample pool")
      ->check(CLI::ExistingFile);
  sim_cmd->add_flag("--audit", so.audit, "report the worst pass rate per n (user risk)");

  bool per_record = false;
  auto* cost_cmd = app.add_subcommand("cost", "cost parameters from a labeled campaign");
  add_common(cost_cmd, o, true);
  cost_cmd->add_flag("--per-record", per_record, "include every record's counting cost");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan_cmd->parsed()) return run_plan(o, plan_optimize, fixed_n_rec);
    if (opt_cmd->parsed()) return run_optimize(o);
    if (cls_cmd->parsed()) return run_classify(o, report_path);
    if (smp_cmd->parsed()) return run_sample(o, report_path);
    if (ev_cmd->parsed()) return run_evaluate(o, eval_test, details_path, embed_details);
    if (sim_cmd->parsed()) return run_simulate(o, so);
    if (cost_cmd->parsed()) return run_cost(o, per_record);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

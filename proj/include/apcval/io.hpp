#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apcval/classify.hpp"
#include "apcval/cost.hpp"
#include "apcval/domain.hpp"

namespace apcval {

/// Unreadable input or a malformed file structure.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view campaign_columns[] = {
    "dop_id", "duration_s", "m1",        "m2",             "m_sup", "m_final",
    "k_auto", "alg_count",  "alg_confidence", "label", "sampled"};

struct row_violation {
  std::size_t line = 0;
  std::string dop_id;
  std::string message;
};

struct campaign {
  std::vector<dop_record> records;
  std::vector<row_violation> violations;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits one CSV line; double quotes protect commas, "" is a literal quote.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Shortest text that parses back to the same double.
inline std::string format_exact(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_double(const std::string& s, std::string_view what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw precondition_error(std::string(what) + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw precondition_error(std::string(what) + ": not a number: '" + s + "'");
  return v;
}

inline count_t parse_count(const std::string& s, std::string_view what) {
  count_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end)
    throw precondition_error(std::string(what) + ": not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, std::string_view what) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw precondition_error(std::string(what) + ": expected true or false, got '" + s + "'");
}

inline std::uint64_t parse_seed(const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw precondition_error("seed: not an unsigned integer: '" + s + "'");
  return v;
}

}  // namespace detail

/// Parses a campaign table. Cell-level problems and record invariant
/// violations are collected per row; `strict` turns the first of them into
/// an exception. A malformed header or a repeated dop_id always throws.
inline campaign parse_campaign(std::istream& in, bool strict = false) {
  std::string line;
  if (!std::getline(in, line)) throw io_error("campaign: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = detail::trim(header[i]);
    if (std::find(std::begin(campaign_columns), std::end(campaign_columns), name) ==
        std::end(campaign_columns))
      throw io_error("campaign: unknown column '" + name + "' in header");
    if (!col.emplace(name, i).second) throw io_error("campaign: column '" + name + "' repeated");
  }
  for (const char* required : {"dop_id", "duration_s", "k_auto"})
    if (!col.count(required)) throw io_error(std::string("campaign: header lacks column ") + required);

  campaign out;
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    auto cell = [&](std::string_view name) -> std::optional<std::string> {
      const auto it = col.find(std::string(name));
      if (it == col.end() || it->second >= cells.size()) return std::nullopt;
      auto v = detail::trim(cells[it->second]);
      if (v.empty()) return std::nullopt;
      return v;
    };

    dop_record r;
    std::vector<std::string> problems;
    if (cells.size() != header.size())
      problems.push_back("expected " + std::to_string(header.size()) + " cells, found " +
                         std::to_string(cells.size()));
    r.dop_id = cell("dop_id").value_or("");
    auto guarded = [&](auto&& fn) {
      try {
        fn();
      } catch (const precondition_error& e) {
        problems.emplace_back(e.what());
      }
    };
    auto opt_count = [&](std::string_view name, std::optional<count_t>& dst) {
      if (auto v = cell(name)) guarded([&] { dst = detail::parse_count(*v, name); });
    };
    if (auto v = cell("duration_s")) guarded([&] { r.duration_s = detail::parse_double(*v, "duration_s"); });
    else problems.emplace_back("duration_s: missing");
    if (auto v = cell("k_auto")) guarded([&] { r.k_auto = detail::parse_count(*v, "k_auto"); });
    else problems.emplace_back("k_auto: missing");
    opt_count("m1", r.m1);
    opt_count("m2", r.m2);
    opt_count("m_sup", r.m_sup);
    opt_count("m_final", r.m_final);
    opt_count("alg_count", r.alg_count);
    if (auto v = cell("alg_confidence"))
      guarded([&] { r.alg_confidence = detail::parse_double(*v, "alg_confidence"); });
    if (auto v = cell("label")) {
      if (*v == "s") r.label = partition_label::safe;
      else if (*v == "u") r.label = partition_label::unsafe;
      else problems.push_back("label: expected s or u, got '" + *v + "'");
    }
    if (auto v = cell("sampled")) guarded([&] { r.sampled = detail::parse_bool(*v, "sampled"); });

    if (!r.dop_id.empty() && !seen.insert(r.dop_id).second)
      throw io_error("campaign: duplicate dop_id '" + r.dop_id + "' at line " + std::to_string(lineno));
    for (auto& p : validate_record(r)) problems.push_back(std::move(p));
    for (auto& p : problems) {
      if (strict)
        throw precondition_error("campaign line " + std::to_string(lineno) + " (" + r.dop_id +
                                 "): " + p);
      out.violations.push_back({lineno, r.dop_id, std::move(p)});
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

inline campaign load_campaign(const std::string& path, bool strict = false) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read campaign file " + path);
  return parse_campaign(in, strict);
}

inline void write_campaign(std::ostream& out, std::span<const dop_record> records) {
  for (std::size_t i = 0; i < std::size(campaign_columns); ++i)
    out << (i ? "," : "") << campaign_columns[i];
  out << '\n';
  auto opt = [](const std::optional<count_t>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : records) {
    out << detail::csv_escape(r.dop_id) << ',' << detail::format_exact(r.duration_s) << ','
        << opt(r.m1) << ',' << opt(r.m2) << ',' << opt(r.m_sup) << ',' << opt(r.m_final) << ','
        << r.k_auto << ',' << opt(r.alg_count) << ','
        << (r.alg_confidence ? detail::format_exact(*r.alg_confidence) : "") << ','
        << to_string(r.label) << ',' << (r.sampled ? (*r.sampled ? "true" : "false") : "") << '\n';
  }
}

inline void save_campaign(const std::string& path, std::span<const dop_record> records) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write campaign file " + path);
  write_campaign(out, records);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything a run needs that is not in the campaign.
struct run_config {
  test_params test;
  partition_params partition;
  std::optional<std::uint64_t> seed;
  classifier_spec classifier;
  cost_rates rates;
  cost_scheme scheme = cost_scheme::no_first_count;
  std::optional<double> c_u;
  std::optional<double> c_s0;
  std::optional<double> c_sZ;
  // Every key that was set, in its textual form.
  std::map<std::string, std::string> explicit_keys;

  std::optional<cost_params> cost_parameters() const {
    if (!c_u && !c_s0 && !c_sZ) return std::nullopt;
    return cost_params{c_u.value_or(0.0), c_s0.value_or(0.0), c_sZ.value_or(0.0)};
  }

  void validate() const {
    test.validate();
    partition.validate();
    rates.validate();
    classifier.validate();
    if (auto c = cost_parameters()) c->validate();
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "alpha", "beta", "delta", "nu", "nu_min", "buffer", "p_s", "nu_s_ratio", "q", "seed",
      "classifier.kind", "classifier.threshold", "classifier.target_share",
      "classifier.first_kind", "classifier.rate_source", "costs.r_av", "costs.c_labor",
      "costs.r_s", "costs.scheme", "costs.recording_cost", "costs.c_u", "costs.c_s0",
      "costs.c_sZ"};
  return keys;
}

/// Sets one key. Unknown keys and unparsable values throw.
inline void apply_setting(run_config& cfg, const std::string& key, const std::string& value) {
  using detail::parse_double;
  const std::map<std::string, double*> doubles{
      {"alpha", &cfg.test.alpha},        {"beta", &cfg.test.beta},
      {"delta", &cfg.test.delta},        {"nu", &cfg.test.nu},
      {"nu_min", &cfg.test.nu_min},      {"buffer", &cfg.test.buffer},
      {"p_s", &cfg.partition.p_s},       {"nu_s_ratio", &cfg.partition.nu_s_ratio},
      {"q", &cfg.partition.q},           {"costs.r_av", &cfg.rates.r_av},
      {"costs.c_labor", &cfg.rates.c_labor}, {"costs.r_s", &cfg.rates.r_s},
      {"costs.recording_cost", &cfg.rates.recording_cost}};
  if (auto it = doubles.find(key); it != doubles.end()) {
    *it->second = parse_double(value, key);
  } else if (key == "seed") {
    cfg.seed = detail::parse_seed(value);
  } else if (key == "classifier.kind" || key == "classifier.first_kind") {
    const auto k = parse_classifier_kind(value);
    if (!k) throw precondition_error(key + ": unknown classifier '" + value + "'");
    (key == "classifier.kind" ? cfg.classifier.kind : cfg.classifier.first_kind) = *k;
  } else if (key == "classifier.threshold") {
    cfg.classifier.threshold = parse_double(value, key);
  } else if (key == "classifier.target_share") {
    cfg.classifier.target_share = parse_double(value, key);
  } else if (key == "classifier.rate_source") {
    if (value == "manual_then_auto") cfg.classifier.rate = rate_source::manual_then_auto;
    else if (value == "automatic") cfg.classifier.rate = rate_source::automatic;
    else throw precondition_error(key + ": expected manual_then_auto or automatic");
  } else if (key == "costs.scheme") {
    if (value == "no_first_count") cfg.scheme = cost_scheme::no_first_count;
    else if (value == "with_first_count") cfg.scheme = cost_scheme::with_first_count;
    else if (value == "combined") cfg.scheme = cost_scheme::combined;
    else throw precondition_error(key + ": expected no_first_count, with_first_count or combined");
  } else if (key == "costs.c_u") {
    cfg.c_u = parse_double(value, key);
  } else if (key == "costs.c_s0") {
    cfg.c_s0 = parse_double(value, key);
  } else if (key == "costs.c_sZ") {
    cfg.c_sZ = parse_double(value, key);
  } else {
    throw precondition_error("unknown configuration key '" + key + "'");
  }
  cfg.explicit_keys[key] = value;
}

/// Splits "key=value"; surrounding blanks are ignored.
inline std::pair<std::string, std::string> split_setting(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos)
    throw precondition_error("expected key=value, got '" + std::string(text) + "'");
  return {detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1))};
}

/// Reads "key = value" lines; '#' starts a comment. Values are validated
/// against the domain invariants after all lines are read.
inline run_config parse_config(std::istream& in, run_config cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    try {
      const auto [k, v] = split_setting(line);
      apply_setting(cfg, k, v);
    } catch (const precondition_error& e) {
      throw precondition_error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline run_config load_config(const std::string& path, run_config cfg = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read config file " + path);
  return parse_config(in, std::move(cfg));
}

}  // namespace apcval

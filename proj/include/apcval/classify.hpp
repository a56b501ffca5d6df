#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "apcval/domain.hpp"
#include "apcval/estimator.hpp"
#include "apcval/planner.hpp"

namespace apcval {

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` under `seed`; independent of call order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

using rng_t = std::mt19937_64;

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

enum class classifier_kind {
  all_safe,
  all_unsafe,
  rule_of_thumb,
  first_count,
  confidence_only,
  confidence_with_count,
  combined
};

enum class rate_source { manual_then_auto, automatic };

inline std::string_view to_string(classifier_kind k) {
  switch (k) {
    case classifier_kind::all_safe: return "all_safe";
    case classifier_kind::all_unsafe: return "all_unsafe";
    case classifier_kind::rule_of_thumb: return "rule_of_thumb";
    case classifier_kind::first_count: return "first_count";
    case classifier_kind::confidence_only: return "confidence_only";
    case classifier_kind::confidence_with_count: return "confidence_with_count";
    case classifier_kind::combined: return "combined";
  }
  return "";
}

inline std::optional<classifier_kind> parse_classifier_kind(std::string_view s) {
  for (auto k : {classifier_kind::all_safe, classifier_kind::all_unsafe,
                 classifier_kind::rule_of_thumb, classifier_kind::first_count,
                 classifier_kind::confidence_only, classifier_kind::confidence_with_count,
                 classifier_kind::combined})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// Partitioning policy. Scores are "higher = less safe"; a record is safe iff
/// its score <= threshold, or it lies in the lowest-scoring `target_share`.
/// For `combined`, `first_kind` is the provisional classifier and the
/// threshold / share apply to it.
struct classifier_spec {
  classifier_kind kind = classifier_kind::all_unsafe;
  std::optional<double> threshold;
  std::optional<double> target_share;
  classifier_kind first_kind = classifier_kind::rule_of_thumb;
  rate_source rate = rate_source::manual_then_auto;

  bool needs_cut() const noexcept {
    return kind != classifier_kind::all_safe && kind != classifier_kind::all_unsafe;
  }

  void validate() const {
    if (kind == classifier_kind::combined) {
      if (first_kind == classifier_kind::combined)
        throw precondition_error("combined classifier cannot nest itself");
    }
    if (needs_cut() || (kind == classifier_kind::combined)) {
      const bool first_is_trivial =
          kind == classifier_kind::combined &&
          (first_kind == classifier_kind::all_safe || first_kind == classifier_kind::all_unsafe);
      if (!first_is_trivial && threshold.has_value() == target_share.has_value())
        throw precondition_error("exactly one of classifier.threshold and classifier.target_share must be set");
    }
    if (target_share && !(*target_share >= 0.0 && *target_share <= 1.0))
      throw precondition_error("classifier.target_share must lie in [0, 1]");
  }
};

/// Unsafety score of one record under a score-based kind.
///
/// rule_of_thumb:          passengers per minute (m1, else k_auto); zero duration is +inf
/// first_count:            |k_auto - m1|
/// confidence_only:        1 - alg_confidence
/// confidence_with_count:  |k_auto - alg_count| + (1 - alg_confidence) / 2
///
/// The last score orders exactly like the pair (count delta, 1 - confidence)
/// because deltas are integers and the confidence term stays below 1.
inline double unsafety_score(const dop_record& r, classifier_kind kind,
                             rate_source rate = rate_source::manual_then_auto) {
  auto need = [&](bool ok, const char* field) {
    if (!ok)
      throw precondition_error("classifier " + std::string(to_string(kind)) + " needs " + field +
                               " on record " + r.dop_id);
  };
  switch (kind) {
    case classifier_kind::rule_of_thumb: {
      if (!(r.duration_s > 0.0)) return std::numeric_limits<double>::infinity();
      const count_t c = (rate == rate_source::manual_then_auto && r.m1) ? *r.m1 : r.k_auto;
      return static_cast<double>(c) / (r.duration_s / 60.0);
    }
    case classifier_kind::first_count:
      need(r.m1.has_value(), "m1");
      return static_cast<double>(std::llabs(r.k_auto - *r.m1));
    case classifier_kind::confidence_only:
      need(r.alg_confidence.has_value(), "alg_confidence");
      return 1.0 - *r.alg_confidence;
    case classifier_kind::confidence_with_count:
      need(r.alg_confidence.has_value(), "alg_confidence");
      need(r.alg_count.has_value(), "alg_count");
      return static_cast<double>(std::llabs(r.k_auto - *r.alg_count)) +
             (1.0 - *r.alg_confidence) / 2.0;
    default:
      throw precondition_error("classifier kind has no score");
  }
}

struct classification_result {
  std::vector<dop_record> records;
  double p_s_hat = 0.0;
  std::size_t n_s = 0;
  // dop_id -> reclassified flag, filled for every safe record by combined_classify.
  std::map<std::string, bool> reclassified;
};

namespace detail {

/// Labels records from scores; ties in target_share mode break by dop_id.
inline void label_by_score(std::vector<dop_record>& recs, const std::vector<double>& score,
                           std::optional<double> threshold, std::optional<double> target_share) {
  if (threshold) {
    for (std::size_t i = 0; i < recs.size(); ++i)
      recs[i].label = score[i] <= *threshold ? partition_label::safe : partition_label::unsafe;
    return;
  }
  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return recs[a].dop_id < recs[b].dop_id;
  });
  const auto k = static_cast<std::size_t>(
      std::llround(*target_share * static_cast<double>(recs.size())));
  for (std::size_t j = 0; j < order.size(); ++j)
    recs[order[j]].label = j < k ? partition_label::safe : partition_label::unsafe;
}

inline void apply_kind(std::vector<dop_record>& recs, classifier_kind kind,
                       std::optional<double> threshold, std::optional<double> target_share,
                       rate_source rate) {
  if (kind == classifier_kind::all_safe || kind == classifier_kind::all_unsafe) {
    for (auto& r : recs)
      r.label = kind == classifier_kind::all_safe ? partition_label::safe : partition_label::unsafe;
    return;
  }
  std::vector<double> score;
  score.reserve(recs.size());
  for (const auto& r : recs) score.push_back(unsafety_score(r, kind, rate));
  label_by_score(recs, score, threshold, target_share);
}

inline classification_result finish(std::vector<dop_record> recs) {
  classification_result out;
  out.n_s = static_cast<std::size_t>(
      std::count_if(recs.begin(), recs.end(), [](const auto& r) { return r.is_safe(); }));
  out.p_s_hat = recs.empty() ? 0.0 : static_cast<double>(out.n_s) / static_cast<double>(recs.size());
  out.records = std::move(recs);
  return out;
}

}  // namespace detail

/// Reclassification rule of the combined workflow: a provisionally unsafe
/// record becomes safe when its first manual count matches the sensor.
using reclass_rule = std::function<bool(const dop_record&)>;

inline bool first_count_agrees(const dop_record& r) {
  if (!r.m1) throw precondition_error("combined classification needs m1 on provisionally unsafe record " + r.dop_id);
  return *r.m1 == r.k_auto;
}

/// Provisional classification with `first`, then reclassification of the
/// provisionally unsafe records by `rule`. Reclassified records get flag 1.
inline classification_result combined_classify(std::span<const dop_record> records,
                                                const classifier_spec& first,
                                                const reclass_rule& rule = first_count_agrees) {
  first.validate();
  if (first.kind == classifier_kind::combined)
    throw precondition_error("combined_classify: first classifier cannot be combined");
  std::vector<dop_record> recs(records.begin(), records.end());
  detail::apply_kind(recs, first.kind, first.threshold, first.target_share, first.rate);
  std::map<std::string, bool> flags;
  for (auto& r : recs) {
    if (r.is_safe()) {
      flags[r.dop_id] = false;
    } else if (rule(r)) {
      r.label = partition_label::safe;
      flags[r.dop_id] = true;
    }
  }
  auto out = detail::finish(std::move(recs));
  out.reclassified = std::move(flags);
  return out;
}

/// Assigns safe/unsafe labels according to `spec`.
inline classification_result classify(std::span<const dop_record> records,
                                      const classifier_spec& spec) {
  spec.validate();
  if (spec.kind == classifier_kind::combined) {
    classifier_spec first = spec;
    first.kind = spec.first_kind;
    return combined_classify(records, first);
  }
  std::vector<dop_record> recs(records.begin(), records.end());
  detail::apply_kind(recs, spec.kind, spec.threshold, spec.target_share, spec.rate);
  return detail::finish(std::move(recs));
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Number of safe records to count for quota q0: ceil(q0 N_s).
inline std::size_t sample_count(double q0, std::size_t n_s) {
  return static_cast<std::size_t>(
      std::llround(round_quota(q0, static_cast<count_t>(n_s)) * static_cast<double>(n_s)));
}

/// Draws exactly ceil(q0 N_s) of `n_s` positions uniformly without
/// replacement (partial Fisher-Yates). Z[k] is true for selected positions.
inline std::vector<bool> draw_sample(std::size_t n_s, double q0, std::uint64_t seed) {
  if (n_s == 0) throw precondition_error("draw_sample: empty safe set");
  const std::size_t m = sample_count(q0, n_s);
  std::vector<bool> z(n_s, false);
  if (m == n_s) {
    z.assign(n_s, true);
    return z;
  }
  std::vector<std::size_t> idx(n_s);
  std::iota(idx.begin(), idx.end(), 0);
  rng_t gen(seed);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_s - 1);
    std::swap(idx[i], idx[pick(gen)]);
    z[idx[i]] = true;
  }
  return z;
}

/// Sampling indicators aligned with `safe_ids`.
inline std::vector<bool> draw_sample(std::span<const std::string> safe_ids, double q0,
                                     std::uint64_t seed) {
  return draw_sample(safe_ids.size(), q0, seed);
}

/// Sets `sampled` on every safe record of a labeled campaign. Unsafe records
/// are left untouched. Returns the number of sampled records.
inline std::size_t sample_campaign(std::vector<dop_record>& records, double q0, std::uint64_t seed) {
  std::vector<dop_record*> safe;
  for (auto& r : records) {
    if (r.label == partition_label::unlabeled)
      throw precondition_error("sample: record " + r.dop_id + " is unlabeled");
    if (r.is_safe()) safe.push_back(&r);
  }
  if (safe.empty()) throw precondition_error("sample: campaign has no safe records");
  const auto z = draw_sample(safe.size(), q0, seed);
  std::size_t m = 0;
  for (std::size_t k = 0; k < safe.size(); ++k) {
    safe[k]->sampled = static_cast<bool>(z[k]);
    m += z[k] ? 1 : 0;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Partition parameter estimates
// ---------------------------------------------------------------------------

struct partition_estimate {
  double p_s = 0.0;
  double nu_s = 0.0;
  double nu_u = 0.0;
  double mu_s = 0.0;
  double mu_u = 0.0;
  double nu = 0.0;  // sqrt(p_s nu_s^2 + p_u nu_u^2 + p_s p_u (mu_s - mu_u)^2)
  double nu_s_ratio = 0.0;
};

/// Plug-in estimates of the partition parameters from per-stratum relative
/// differences, with p_s taken as N_s / n.
inline partition_estimate partition_stats_estimate(std::span<const double> safe_d,
                                                   std::size_t n_safe,
                                                   std::span<const double> unsafe_d) {
  const std::size_t n = n_safe + unsafe_d.size();
  if (n == 0) throw precondition_error("partition_stats_estimate: empty campaign");
  if (n_safe > 0 && safe_d.empty())
    throw precondition_error("partition_stats_estimate: safe stratum has no counted record");
  partition_estimate e;
  e.p_s = static_cast<double>(n_safe) / static_cast<double>(n);
  const double p_u = 1.0 - e.p_s;
  e.mu_s = detail::mean(safe_d);
  e.mu_u = detail::mean(unsafe_d);
  e.nu_s = detail::sample_sd(safe_d).value_or(0.0);
  e.nu_u = detail::sample_sd(unsafe_d).value_or(0.0);
  const double gap = e.mu_s - e.mu_u;
  e.nu = std::sqrt(e.p_s * e.nu_s * e.nu_s + p_u * e.nu_u * e.nu_u + e.p_s * p_u * gap * gap);
  e.nu_s_ratio = e.nu > 0.0 ? e.nu_s / e.nu : 0.0;
  return e;
}

/// Same estimate from a labeled, counted campaign; D uses the leave-q-out
/// mean count of the counted records.
inline partition_estimate partition_stats_estimate(std::span<const dop_record> records) {
  std::size_t n_s = 0, counted = 0;
  for (const auto& r : records) {
    if (r.label == partition_label::unlabeled)
      throw precondition_error("partition_stats_estimate: record " + r.dop_id + " is unlabeled");
    if (r.is_safe()) {
      ++n_s;
      if (r.is_sampled()) ++counted;
    }
  }
  if (n_s > 0 && counted == 0)
    throw precondition_error("partition_stats_estimate: safe stratum has no counted record");
  const double q_eff = n_s ? static_cast<double>(counted) / static_cast<double>(n_s) : 1.0;
  const auto d = relative_differences(records, mhat_q(records, q_eff), q_eff);
  std::vector<double> safe_d, unsafe_d;
  for (const auto& x : d) (x.stratum == partition_label::safe ? safe_d : unsafe_d).push_back(x.d);
  return partition_stats_estimate(safe_d, n_s, unsafe_d);
}

}  // namespace apcval

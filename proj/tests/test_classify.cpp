#include "apcval/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

namespace {

using namespace apcval;

constexpr auto S = partition_label::safe;
constexpr auto U = partition_label::unsafe;

dop_record make(std::string id, count_t k, std::optional<count_t> m1 = std::nullopt, double duration = 60.0) {
  dop_record r;
  r.dop_id = std::move(id);
  r.k_auto = k;
  r.m1 = m1;
  r.duration_s = duration;
  return r;
}

std::vector<partition_label> labels(const classification_result& r) {
  std::vector<partition_label> out;
  for (const auto& x : r.records) out.push_back(x.label);
  return out;
}

TEST(Classify, AllSafeAndAllUnsafe) {
  const std::vector<dop_record> recs{make("a", 1), make("b", 2)};
  const auto s = classify(recs, {classifier_kind::all_safe});
  EXPECT_DOUBLE_EQ(s.p_s_hat, 1.0);
  EXPECT_EQ(labels(s), (std::vector{S, S}));
  const auto u = classify(recs, {classifier_kind::all_unsafe});
  EXPECT_DOUBLE_EQ(u.p_s_hat, 0.0);
  EXPECT_EQ(labels(u), (std::vector{U, U}));
}

TEST(Classify, FirstCountExactMatch) {
  const std::vector<dop_record> recs{make("a", 3, 3), make("b", 5, 5), make("c", 4, 2)};
  classifier_spec spec{classifier_kind::first_count};
  spec.threshold = 0.0;
  const auto r = classify(recs, spec);
  EXPECT_EQ(labels(r), (std::vector{S, S, U}));
  EXPECT_NEAR(r.p_s_hat, 2.0 / 3.0, 1e-15);
}

TEST(Classify, ConfidenceWithCountIsLexicographic) {
  std::vector<dop_record> recs{make("a", 5), make("b", 5), make("c", 5)};
  const count_t alg[] = {5, 5, 6};
  const double conf[] = {0.9, 0.2, 0.99};
  for (int i = 0; i < 3; ++i) {
    recs[i].alg_count = alg[i];
    recs[i].alg_confidence = conf[i];
  }
  classifier_spec spec{classifier_kind::confidence_with_count};
  spec.target_share = 2.0 / 3.0;
  EXPECT_EQ(labels(classify(recs, spec)), (std::vector{S, S, U}));

  // Confidence decides among equal count deltas.
  spec.target_share = 1.0 / 3.0;
  EXPECT_EQ(labels(classify(recs, spec)), (std::vector{S, U, U}));
}

TEST(Classify, ConfidenceOnly) {
  std::vector<dop_record> recs{make("a", 1), make("b", 1), make("c", 1)};
  recs[0].alg_confidence = 0.95;
  recs[1].alg_confidence = 0.5;
  recs[2].alg_confidence = 0.8;
  classifier_spec spec{classifier_kind::confidence_only};
  spec.threshold = 0.25;
  EXPECT_EQ(labels(classify(recs, spec)), (std::vector{S, U, S}));
  recs[1].alg_confidence.reset();
  EXPECT_THROW(classify(recs, spec), precondition_error);
}

TEST(Classify, RuleOfThumbPassengersPerMinute) {
  // 2 per minute, 12 per minute (k_auto fallback), zero duration.
  const std::vector<dop_record> recs{make("a", 9, 2, 60.0), make("b", 6, std::nullopt, 30.0),
                                     make("c", 0, 0, 0.0)};
  classifier_spec spec{classifier_kind::rule_of_thumb};
  spec.threshold = 5.0;
  EXPECT_EQ(labels(classify(recs, spec)), (std::vector{S, U, U}));
  spec.rate = rate_source::automatic;
  EXPECT_EQ(labels(classify(recs, spec)), (std::vector{U, U, U}));
  EXPECT_TRUE(std::isinf(unsafety_score(recs[2], classifier_kind::rule_of_thumb)));
}

TEST(Classify, SpecValidation) {
  classifier_spec both{classifier_kind::first_count};
  both.threshold = 0.0;
  both.target_share = 0.5;
  EXPECT_THROW(both.validate(), precondition_error);
  classifier_spec none{classifier_kind::first_count};
  EXPECT_THROW(none.validate(), precondition_error);
  classifier_spec share{classifier_kind::first_count};
  share.target_share = 1.5;
  EXPECT_THROW(share.validate(), precondition_error);
  EXPECT_NO_THROW(classifier_spec{classifier_kind::all_safe}.validate());
}

TEST(Classify, MissingFieldNamesRecord) {
  const std::vector<dop_record> recs{make("a", 3, 3), make("nofirst", 3)};
  classifier_spec spec{classifier_kind::first_count};
  spec.threshold = 0.0;
  try {
    classify(recs, spec);
    FAIL();
  } catch (const precondition_error& e) {
    EXPECT_NE(std::string(e.what()).find("nofirst"), std::string::npos);
  }
}

TEST(Classify, TargetShareWithinOneRecord) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<count_t> k(0, 6);
  std::uniform_real_distribution<double> share(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<dop_record> recs;
    const int n = 1 + trial % 37;
    for (int i = 0; i < n; ++i) recs.push_back(make("r" + std::to_string(i), k(gen), k(gen)));
    classifier_spec spec{classifier_kind::first_count};
    spec.target_share = share(gen);
    const auto r = classify(recs, spec);
    EXPECT_LE(std::abs(r.p_s_hat - *spec.target_share), 1.0 / n + 1e-12);
  }
}

TEST(Classify, PermutationInvariant) {
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<count_t> k(0, 4);
  std::vector<dop_record> recs;
  for (int i = 0; i < 40; ++i) recs.push_back(make("r" + std::to_string(i), k(gen), k(gen)));
  classifier_spec spec{classifier_kind::first_count};
  spec.target_share = 0.4;
  const auto base = classify(recs, spec);
  std::map<std::string, partition_label> expected;
  for (const auto& r : base.records) expected[r.dop_id] = r.label;
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(recs.begin(), recs.end(), gen);
    for (const auto& r : classify(recs, spec).records) EXPECT_EQ(r.label, expected[r.dop_id]);
  }
}

TEST(CombinedClassify, AllSafeFirstHasNoReclassification) {
  const std::vector<dop_record> recs{make("a", 1, 1), make("b", 2, 3)};
  const auto r = combined_classify(recs, {classifier_kind::all_safe});
  EXPECT_EQ(labels(r), (std::vector{S, S}));
  for (const auto& [id, w] : r.reclassified) EXPECT_FALSE(w);
  EXPECT_EQ(r.reclassified.size(), 2u);
}

TEST(CombinedClassify, FourRecordHandCase) {
  // Rule of thumb at 5/min: a (2/min) safe; b, c, d provisionally unsafe.
  // b: m1 == k_auto -> reclassified safe; c: mismatch -> unsafe; d: match -> reclassified safe.
  const std::vector<dop_record> recs{make("a", 2, 2, 60.0), make("b", 10, 10, 60.0),
                                     make("c", 8, 9, 60.0), make("d", 7, 7, 30.0)};
  classifier_spec first{classifier_kind::rule_of_thumb};
  first.threshold = 5.0;
  const auto r = combined_classify(recs, first);
  EXPECT_EQ(labels(r), (std::vector{S, S, U, S}));
  EXPECT_EQ(r.reclassified.at("a"), false);
  EXPECT_EQ(r.reclassified.at("b"), true);
  EXPECT_EQ(r.reclassified.at("d"), true);
  EXPECT_EQ(r.reclassified.count("c"), 0u);
  EXPECT_NEAR(r.p_s_hat, 0.75, 1e-15);

  classifier_spec combined = first;
  combined.kind = classifier_kind::combined;
  combined.first_kind = classifier_kind::rule_of_thumb;
  EXPECT_EQ(labels(classify(recs, combined)), labels(r));
}

TEST(CombinedClassify, ProvisionalUnsafeNeedsFirstCount) {
  const std::vector<dop_record> recs{make("a", 2)};
  EXPECT_THROW(combined_classify(recs, {classifier_kind::all_unsafe}), precondition_error);
}

TEST(DrawSample, FullQuota) {
  const auto z = draw_sample(9, 1.0, 42);
  EXPECT_TRUE(std::all_of(z.begin(), z.end(), [](bool b) { return b; }));
}

TEST(DrawSample, CeilingCount) {
  const auto z = draw_sample(7, 0.5, 42);
  EXPECT_EQ(std::count(z.begin(), z.end(), true), 4);
  EXPECT_THROW(draw_sample(0, 0.5, 1), precondition_error);
  EXPECT_THROW(draw_sample(5, 0.0, 1), precondition_error);
}

TEST(DrawSample, ExactCountForAllInputs) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> q(1e-4, 1.0);
  for (std::size_t n = 1; n < 400; n += 7) {
    const double q0 = q(gen);
    const auto z = draw_sample(n, q0, n);
    EXPECT_EQ(static_cast<std::size_t>(std::count(z.begin(), z.end(), true)), sample_count(q0, n));
    EXPECT_EQ(sample_count(q0, n), static_cast<std::size_t>(std::ceil(q0 * n - 1e-9)));
  }
}

TEST(DrawSample, Deterministic) {
  EXPECT_EQ(draw_sample(1000, 0.3, 77), draw_sample(1000, 0.3, 77));
  EXPECT_NE(draw_sample(1000, 0.3, 77), draw_sample(1000, 0.3, 78));
}

TEST(DrawSample, UniformInclusionFrequency) {
  constexpr int seeds = 100000;
  std::vector<int> hits(10, 0);
  for (int s = 0; s < seeds; ++s) {
    const auto z = draw_sample(10, 0.5, derive_seed(2024, s));
    for (int i = 0; i < 10; ++i) hits[i] += z[i] ? 1 : 0;
  }
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / seeds, 0.5, 0.01);
}

TEST(SampleCampaign, MarksOnlySafeRecords) {
  std::vector<dop_record> recs;
  for (int i = 0; i < 10; ++i) {
    auto r = make("r" + std::to_string(i), 1);
    r.label = i < 7 ? S : U;
    recs.push_back(r);
  }
  EXPECT_EQ(sample_campaign(recs, 0.5, 3), 4u);
  for (const auto& r : recs) EXPECT_EQ(r.sampled.has_value(), r.is_safe());
  recs[0].label = partition_label::unlabeled;
  EXPECT_THROW(sample_campaign(recs, 0.5, 3), precondition_error);
}

TEST(PartitionStatsEstimate, CompositeIdentity) {
  // Two-point strata with known means and sigmas.
  const std::vector<double> safe{-0.05, 0.05};
  const std::vector<double> unsafe{0.3, -0.3, 0.3, -0.3};
  const auto e = partition_stats_estimate(safe, 2, unsafe);
  EXPECT_NEAR(e.p_s, 1.0 / 3.0, 1e-15);
  const double nus = std::sqrt(0.005), nuu = std::sqrt(0.12);
  EXPECT_NEAR(e.nu_s, nus, 1e-15);
  EXPECT_NEAR(e.nu_u, nuu, 1e-15);
  EXPECT_NEAR(e.nu * e.nu, e.p_s * nus * nus + (1 - e.p_s) * nuu * nuu, 1e-15);
}

TEST(PartitionStatsEstimate, SingleStratum) {
  const std::vector<double> safe{0.1, 0.2, 0.4};
  const auto e = partition_stats_estimate(safe, 3, {});
  EXPECT_NEAR(e.nu, e.nu_s, 1e-15);
  EXPECT_NEAR(e.nu_s_ratio, 1.0, 1e-15);
}

TEST(PartitionStatsEstimate, HandExampleFormula) {
  // p_s = 0.9, nu_s = 0.05, nu_u = 0.3, mu_s - mu_u = 0.02.
  const double v = 0.9 * 0.0025 + 0.1 * 0.09 + 0.9 * 0.1 * 0.0004;
  EXPECT_NEAR(v, 0.011286, 1e-15);
}

TEST(PartitionStatsEstimate, MatchesPlainVarianceOnFullCount) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> ds(0.01, 0.04), du(-0.05, 0.2);
  std::bernoulli_distribution safe(0.8);
  std::vector<double> s, u, all;
  for (int i = 0; i < 200000; ++i) {
    const double d = safe(gen) ? (s.push_back(ds(gen)), s.back()) : (u.push_back(du(gen)), u.back());
    all.push_back(d);
  }
  const auto e = partition_stats_estimate(s, s.size(), u);
  const double m = std::accumulate(all.begin(), all.end(), 0.0) / all.size();
  double ss = 0.0;
  for (double d : all) ss += (d - m) * (d - m);
  const double plain = ss / (all.size() - 1);
  EXPECT_NEAR(e.nu * e.nu / plain, 1.0, 0.01);
}

TEST(PartitionStatsEstimate, Errors) {
  EXPECT_THROW(partition_stats_estimate({}, 0, {}), precondition_error);
  EXPECT_THROW(partition_stats_estimate({}, 5, std::vector<double>{0.1}), precondition_error);
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(1, i));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}

}  // namespace

#include "apcval/estimator.hpp"
#include "apcval/io.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace {

using namespace apcval;

dop_record rec(std::string id, partition_label label, std::optional<count_t> m, count_t k,
               std::optional<bool> sampled = std::nullopt) {
  dop_record r;
  r.dop_id = std::move(id);
  r.label = label;
  if (m) {
    r.m1 = m;
    r.m2 = m;
    r.m_final = m;
  }
  r.k_auto = k;
  r.sampled = sampled;
  return r;
}

constexpr auto S = partition_label::safe;
constexpr auto U = partition_label::unsafe;

std::vector<dop_record> worked_example() {
  return {rec("s1", S, 2, 2, true), rec("s2", S, std::nullopt, 4, false), rec("u1", U, 3, 3)};
}

TEST(MhatQ, LeaveQOutExample) {
  auto recs = worked_example();
  // The non-sampled safe record carries M=4 that must be ignored.
  recs[1].m_final = 4;
  EXPECT_NEAR(mhat_q(recs, 0.5), 7.0 / 3.0, 1e-15);
}

TEST(MhatQ, AllUnsafeIsPlainMean) {
  std::vector<dop_record> recs{rec("a", U, 1, 0), rec("b", U, 2, 0), rec("c", U, 3, 0)};
  EXPECT_DOUBLE_EQ(mhat_q(recs, 1.0), 2.0);
}

TEST(MhatQ, FullQuotaIsPlainMean) {
  std::vector<dop_record> recs{rec("a", S, 2, 0, true), rec("b", S, 4, 0, true), rec("c", U, 3, 0)};
  EXPECT_DOUBLE_EQ(mhat_q(recs, 1.0), 3.0);
}

TEST(MhatQ, Errors) {
  EXPECT_THROW(mhat_q({}, 1.0), precondition_error);
  auto recs = worked_example();
  EXPECT_THROW(mhat_q(recs, 0.0), precondition_error);
  recs[2].m_final.reset();
  EXPECT_THROW(mhat_q(recs, 0.5), precondition_error);
}

TEST(RelativeDifferences, Examples) {
  std::vector<dop_record> one{rec("a", U, 4, 5)};
  EXPECT_DOUBLE_EQ(relative_differences(one, 2.0)[0].d, 0.5);
  std::vector<dop_record> zero{rec("a", U, 4, 4)};
  EXPECT_DOUBLE_EQ(relative_differences(zero, 123.0)[0].d, 0.0);
  std::vector<dop_record> neg{rec("a", U, 4, 3)};
  EXPECT_NEAR(relative_differences(neg, 7.0 / 3.0)[0].d, -3.0 / 7.0, 1e-15);
  EXPECT_THROW(relative_differences(one, 0.0), precondition_error);
}

TEST(RelativeDifferences, SkipsNonSampledSafeAndWeights) {
  const auto d = relative_differences(worked_example(), 7.0 / 3.0, 0.5);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].dop_id, "s1");
  EXPECT_DOUBLE_EQ(d[0].weight, 2.0);
  EXPECT_EQ(d[1].dop_id, "u1");
  EXPECT_DOUBLE_EQ(d[1].weight, 1.0);
}

TEST(DhatQ, Examples) {
  partition_stats st;
  st.n = 3;
  st.n_s = 2;
  st.n_u = 1;
  st.d_bar_s = 0.1;
  st.d_bar_u = -0.2;
  EXPECT_NEAR(dhat_q(st), 0.0, 1e-15);

  partition_stats unsafe_only;
  unsafe_only.n = 5;
  unsafe_only.n_u = 5;
  unsafe_only.d_bar_u = 0.03;
  EXPECT_DOUBLE_EQ(dhat_q(unsafe_only), 0.03);

  EXPECT_THROW(dhat_q(partition_stats{}), precondition_error);
}

partition_stats variance_example() {
  partition_stats st;
  st.n = 1000;
  st.n_s = 900;
  st.n_u = 100;
  st.n_s_counted = 450;
  st.q_effective = 0.5;
  st.nu_hat_s = 0.05;
  st.nu_hat_u = 0.3;
  st.d_bar_s = 0.0;
  st.d_bar_u = 0.02;
  return st;
}

TEST(PooledVariance, ThreeTermExample) {
  const auto r = pooled_variance(variance_example(), 0.03);
  EXPECT_NEAR(r.variance, 0.013536, 1e-15);
  EXPECT_FALSE(r.clamped_s);
  EXPECT_FALSE(r.clamped_u);
}

TEST(PooledVariance, ClampsToNuMin) {
  auto st = variance_example();
  st.nu_hat_s = 0.01;
  const auto r = pooled_variance(st, 0.03);
  EXPECT_TRUE(r.clamped_s);
  EXPECT_NEAR(r.variance, 0.9 * 0.0009 / 0.5 + 0.1 * 0.09 + 0.09 * 0.0004, 1e-15);
}

TEST(PooledVariance, SingleStratumCollapse) {
  partition_stats st;
  st.n = 50;
  st.n_s = 50;
  st.n_s_counted = 25;
  st.q_effective = 0.5;
  st.nu_hat_s = 0.04;
  EXPECT_NEAR(pooled_variance(st, 0.03).variance, 0.04 * 0.04 / 0.5, 1e-15);
}

TEST(PooledVariance, DegenerateStratumUsesNuMin) {
  partition_stats st;
  st.n = 3;
  st.n_s = 2;
  st.n_u = 1;
  st.n_s_counted = 1;
  st.q_effective = 0.5;
  st.degenerate_s = true;
  st.degenerate_u = true;
  const auto r = pooled_variance(st, 0.03);
  EXPECT_TRUE(r.clamped_s && r.clamped_u);
  EXPECT_NEAR(r.variance, 2.0 / 3.0 * 0.0009 / 0.5 + 1.0 / 3.0 * 0.0009, 1e-15);
}

TEST(ConfidenceInterval, Examples) {
  const auto zero = confidence_interval(0.0, 0.0, 10, 0.05);
  EXPECT_EQ(zero.low, 0.0);
  EXPECT_EQ(zero.high, 0.0);

  // Half widths from scipy: z * nu / sqrt(n).
  const auto a = confidence_interval(0.0, 0.15, 3458, 0.05);
  EXPECT_NEAR(a.high, 0.004999503256574389, 1e-12);
  EXPECT_NEAR(a.low, -0.004999503256574389, 1e-12);

  const auto b = confidence_interval(0.002, 0.2, 6147, 0.05);
  EXPECT_NEAR(b.low, 0.002 - 0.004999729174831714, 1e-12);
  EXPECT_NEAR(b.high, 0.002 + 0.004999729174831714, 1e-12);

  EXPECT_THROW(confidence_interval(0.0, 0.1, 0, 0.05), precondition_error);
}

TEST(EquivalenceVerdict, Examples) {
  EXPECT_EQ(equivalence_verdict({-0.003, 0.007}, 0.01), verdict::pass);
  EXPECT_EQ(equivalence_verdict({-0.003, 0.011}, 0.01), verdict::fail);
  EXPECT_EQ(equivalence_verdict({-0.01, 0.01}, 0.01), verdict::pass);
  EXPECT_EQ(equivalence_verdict({-0.0100001, 0.0}, 0.01), verdict::fail);
}

TEST(EvaluateClassic, ZeroErrorsPassWithNuMinWidth) {
  std::vector<dop_record> recs;
  for (int i = 0; i < 100; ++i) recs.push_back(rec("r" + std::to_string(i), U, 3, 3));
  const auto rep = evaluate_classic(recs, test_params{});
  EXPECT_DOUBLE_EQ(rep.d_hat, 0.0);
  EXPECT_DOUBLE_EQ(rep.nu_hat, 0.03);
  EXPECT_TRUE(rep.clamped_u);
  EXPECT_NEAR(rep.ci_high, 1.959963984540054 * 0.03 / 10.0, 1e-12);
  EXPECT_EQ(rep.result, verdict::pass);
}

TEST(EvaluateClassic, SingleRecordIsDegenerate) {
  std::vector<dop_record> recs{rec("a", U, 3, 3)};
  const auto rep = evaluate_classic(recs, test_params{});
  EXPECT_DOUBLE_EQ(rep.nu_hat, 0.03);
  EXPECT_TRUE(rep.stats.degenerate_u);
  EXPECT_FALSE(rep.warnings.empty());
}

TEST(EvaluateClassic, MissingGroundTruthNamesRecords) {
  std::vector<dop_record> recs{rec("a", U, 3, 3), rec("lost", U, std::nullopt, 3)};
  try {
    evaluate_classic(recs, test_params{});
    FAIL() << "expected precondition_error";
  } catch (const precondition_error& e) {
    EXPECT_NE(std::string(e.what()).find("lost"), std::string::npos);
  }
}

TEST(EvaluatePartitioned, WorkedThreeRecordExample) {
  const auto rep = evaluate_partitioned(worked_example(), test_params{});
  EXPECT_DOUBLE_EQ(rep.d_hat, 0.0);
  EXPECT_NEAR(rep.stats.m_hat_q, 7.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(rep.stats.q_effective, 0.5);
  // Both strata degenerate: nu^2 = (2/3) nu_min^2 / 0.5 + (1/3) nu_min^2.
  const double nu = std::sqrt(2.0 / 3.0 * 0.0009 / 0.5 + 1.0 / 3.0 * 0.0009);
  EXPECT_NEAR(rep.nu_hat, nu, 1e-15);
  EXPECT_NEAR(rep.ci_high, 1.959963984540054 * nu / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(rep.result, verdict::fail);
}

TEST(EvaluatePartitioned, GoldenCampaignMatchesIndependentComputation) {
  // Oracle values computed with numpy using explicit Z/q weights.
  const auto c = load_campaign(std::string(APCVAL_FIXTURE_DIR) + "/campaign12.csv");
  ASSERT_TRUE(c.violations.empty());
  test_params p;
  p.delta = 0.3;
  const auto rep = evaluate_partitioned(c.records, p, 0.5);
  EXPECT_DOUBLE_EQ(rep.stats.q_effective, 0.5);
  EXPECT_NEAR(rep.stats.m_hat_q, 6.083333333333333, 1e-12);
  EXPECT_NEAR(rep.stats.d_bar_s, 0.0, 1e-12);
  EXPECT_NEAR(rep.stats.d_bar_u, 0.12328767123287673, 1e-12);
  EXPECT_NEAR(rep.stats.nu_hat_s, 0.13421861604291388, 1e-12);
  EXPECT_NEAR(rep.stats.nu_hat_u, 0.24657534246575344, 1e-12);
  EXPECT_NEAR(rep.d_hat, 0.04109589041095891, 1e-12);
  EXPECT_NEAR(rep.nu_hat, 0.21832023904807163, 1e-12);
  EXPECT_NEAR(rep.ci_low, -0.08242814357248981, 1e-12);
  EXPECT_NEAR(rep.ci_high, 0.16461992439440765, 1e-12);
  EXPECT_EQ(rep.result, verdict::pass);
  EXPECT_EQ(rep.details.size(), 8u);
}

TEST(EvaluatePartitioned, PreconditionsNameRecords) {
  auto recs = worked_example();
  recs.push_back(rec("nolabel", partition_label::unlabeled, 1, 1));
  recs.push_back(rec("undet", S, 1, 1));
  try {
    evaluate_partitioned(recs, test_params{});
    FAIL() << "expected precondition_error";
  } catch (const precondition_error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("nolabel"), std::string::npos);
    EXPECT_NE(what.find("undet"), std::string::npos);
  }
}

TEST(EvaluatePartitioned, SafeStratumWithoutSampleIsRejected) {
  std::vector<dop_record> recs{rec("s", S, std::nullopt, 1, false), rec("u", U, 2, 2)};
  EXPECT_THROW(evaluate_partitioned(recs, test_params{}), precondition_error);
}

TEST(EvaluatePartitioned, AllUnsafeEqualsClassic) {
  std::vector<dop_record> recs{rec("a", U, 10, 11), rec("b", U, 8, 8), rec("c", U, 12, 10), rec("d", U, 9, 9)};
  const auto part = evaluate_partitioned(recs, test_params{});
  const auto classic = evaluate_classic(recs, test_params{});
  EXPECT_DOUBLE_EQ(part.d_hat, classic.d_hat);
  EXPECT_DOUBLE_EQ(part.nu_hat, classic.nu_hat);
  EXPECT_EQ(part.result, classic.result);
}

TEST(EvaluatePartitioned, PlannedQuotaMismatchWarns) {
  const auto rep = evaluate_partitioned(worked_example(), test_params{}, 0.3);
  ASSERT_TRUE(rep.q_planned);
  EXPECT_DOUBLE_EQ(*rep.q_planned, 0.3);
  bool warned = false;
  for (const auto& w : rep.warnings) warned |= w.find("realized quota") != std::string::npos;
  EXPECT_TRUE(warned);
}

TEST(EvaluateStratified, ReportInvariants) {
  stratified_sample s;
  s.n_safe = 6;
  s.safe_counted = {0.01, -0.02, 0.03};
  s.unsafe = {0.1, -0.05, 0.2, 0.0};
  const auto rep = evaluate_stratified(s, test_params{});
  EXPECT_LE(rep.ci_low, rep.d_hat);
  EXPECT_LE(rep.d_hat, rep.ci_high);
  EXPECT_EQ(rep.result == verdict::pass, rep.ci_low >= -rep.delta && rep.ci_high <= rep.delta);
  EXPECT_EQ(rep.stats.n, rep.stats.n_s + rep.stats.n_u);
}

}  // namespace

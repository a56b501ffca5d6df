#include "apcval/cost.hpp"

#include <gtest/gtest.h>

namespace {

using namespace apcval;

dop_record labeled(std::string id, double duration, partition_label label) {
  dop_record r;
  r.dop_id = std::move(id);
  r.duration_s = duration;
  r.label = label;
  return r;
}

constexpr auto S = partition_label::safe;
constexpr auto U = partition_label::unsafe;

TEST(CountingCost, Examples) {
  const cost_rates rates;
  EXPECT_NEAR(counting_cost(42.15, rates), 0.16391666666666665, 1e-15);
  EXPECT_NEAR(counting_cost(42.15, rates), 0.164, 5e-4);
  EXPECT_DOUBLE_EQ(counting_cost(0.0, rates), 0.0);
  EXPECT_NEAR(counting_cost(3600.0, rates), 14.0, 1e-12);
  EXPECT_THROW(counting_cost(-1.0, rates), precondition_error);
}

TEST(CountingCost, LinearInDurationAndLabor) {
  cost_rates rates;
  EXPECT_NEAR(counting_cost(90.0, rates), 3.0 * counting_cost(30.0, rates), 1e-14);
  const double base = counting_cost(50.0, rates);
  rates.c_labor = 40.0;
  EXPECT_NEAR(counting_cost(50.0, rates), 2.0 * base, 1e-14);
}

// Durations 36, 72, 108 s cost 0.14, 0.28, 0.42 at the default rates.
std::vector<dop_record> three_safe_one_unsafe() {
  return {labeled("a", 36, S), labeled("b", 72, S), labeled("c", 108, S), labeled("u", 180, U)};
}

TEST(CostsNoFirstCount, HandCase) {
  const auto b = costs_no_first_count(three_safe_one_unsafe(), cost_rates{});
  EXPECT_DOUBLE_EQ(b.c_s0, 0.0);
  EXPECT_NEAR(b.c_sZ, 2.2 * 0.28, 1e-14);
  EXPECT_NEAR(b.c_u, 2.2 * 0.7, 1e-14);
  EXPECT_EQ(b.per_record.size(), 4u);
  EXPECT_NEAR(b.per_record[0].counting_cost, 0.14, 1e-15);
}

TEST(CostsNoFirstCount, ConstantDuration) {
  std::vector<dop_record> recs{labeled("a", 40, S), labeled("b", 40, S), labeled("u", 40, U)};
  const auto b = costs_no_first_count(recs, cost_rates{});
  EXPECT_NEAR(b.c_sZ, 2.2 * counting_cost(40, cost_rates{}), 1e-15);
}

TEST(CostsNoFirstCount, EmptySafeStratumWarns) {
  std::vector<dop_record> recs{labeled("u", 40, U)};
  const auto b = costs_no_first_count(recs, cost_rates{});
  EXPECT_DOUBLE_EQ(b.c_s0, 0.0);
  EXPECT_DOUBLE_EQ(b.c_sZ, 0.0);
  ASSERT_EQ(b.warnings.size(), 1u);
}

TEST(CostsNoFirstCount, UnlabeledRejected) {
  std::vector<dop_record> recs{labeled("x", 40, partition_label::unlabeled)};
  EXPECT_THROW(costs_no_first_count(recs, cost_rates{}), precondition_error);
}

TEST(CostsWithFirstCount, HandCase) {
  const auto b = costs_with_first_count(three_safe_one_unsafe(), cost_rates{});
  EXPECT_NEAR(b.c_s0, 0.28, 1e-14);
  EXPECT_NEAR(b.c_sZ, 1.2 * 0.28, 1e-14);
  EXPECT_NEAR(b.c_u, 2.2 * 0.7, 1e-14);
}

TEST(CostsWithFirstCount, TotalsMatchNoFirstCount) {
  const auto a = costs_no_first_count(three_safe_one_unsafe(), cost_rates{});
  const auto b = costs_with_first_count(three_safe_one_unsafe(), cost_rates{});
  EXPECT_NEAR(a.c_s0 + a.c_sZ, b.c_s0 + b.c_sZ, 1e-14);
}

TEST(CostsWithFirstCount, NoSurchargeMeansNoCountingCost) {
  cost_rates rates;
  rates.r_s = 0.0;
  EXPECT_DOUBLE_EQ(costs_with_first_count(three_safe_one_unsafe(), rates).c_sZ, 0.0);
}

TEST(CostsCombined, FlagsOneZeroOne) {
  const std::map<std::string, bool> flags{{"a", true}, {"b", false}, {"c", true}};
  const auto b = costs_combined(three_safe_one_unsafe(), flags, cost_rates{});
  EXPECT_NEAR(b.c_s0, (0.14 + 0.42) / 3.0, 1e-14);
  EXPECT_NEAR(b.c_sZ, (1.2 * 0.14 + 2.2 * 0.28 + 1.2 * 0.42) / 3.0, 1e-14);
  EXPECT_NEAR(b.c_u, 2.2 * 0.7, 1e-14);
}

TEST(CostsCombined, ReducesToOtherSchemes) {
  const auto recs = three_safe_one_unsafe();
  const std::map<std::string, bool> none{{"a", false}, {"b", false}, {"c", false}};
  const std::map<std::string, bool> all{{"a", true}, {"b", true}, {"c", true}};
  const auto z = costs_combined(recs, none, cost_rates{});
  const auto nf = costs_no_first_count(recs, cost_rates{});
  EXPECT_NEAR(z.c_s0, nf.c_s0, 1e-14);
  EXPECT_NEAR(z.c_sZ, nf.c_sZ, 1e-14);
  const auto o = costs_combined(recs, all, cost_rates{});
  const auto wf = costs_with_first_count(recs, cost_rates{});
  EXPECT_NEAR(o.c_s0, wf.c_s0, 1e-14);
  EXPECT_NEAR(o.c_sZ, wf.c_sZ, 1e-14);
}

TEST(CostsCombined, MissingFlagNamesRecord) {
  const std::map<std::string, bool> flags{{"a", true}, {"c", true}};
  try {
    costs_combined(three_safe_one_unsafe(), flags, cost_rates{});
    FAIL() << "expected precondition_error";
  } catch (const precondition_error& e) {
    EXPECT_NE(std::string(e.what()).find('b'), std::string::npos);
  }
}

TEST(RecordingCost, AddedToBothStrata) {
  cost_rates rates;
  rates.recording_cost = 0.05;
  const auto b = costs_no_first_count(three_safe_one_unsafe(), rates);
  EXPECT_NEAR(b.c_s0, 0.05, 1e-15);
  EXPECT_NEAR(b.c_u, 2.2 * 0.7 + 0.05, 1e-14);
}

}  // namespace

// Synthetic end-to-end run: plan, classify, sample, evaluate, and compare
// the cost of the partitioned plan with the classic one.

#include <cstdio>
#include <random>

#include "apcval/apcval.hpp"

using namespace apcval;

namespace {

std::vector<dop_record> synthetic_campaign(std::size_t n, std::uint64_t seed) {
  rng_t gen(seed);
  std::uniform_real_distribution<double> duration(15.0, 70.0);
  std::bernoulli_distribution hard(0.1);
  std::bernoulli_distribution slip(0.03);
  std::uniform_real_distribution<double> conf_easy(0.85, 1.0), conf_hard(0.2, 0.8);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<dop_record> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    dop_record r;
    char id[32];
    std::snprintf(id, sizeof id, "dop-%05zu", i);
    r.dop_id = id;
    r.duration_s = duration(gen);
    const auto truth = std::poisson_distribution<count_t>(r.duration_s / 6.0)(gen);
    const bool difficult = hard(gen);
    count_t k = truth;
    if (difficult) k = std::max<count_t>(0, truth + static_cast<count_t>(std::lround(1.5 * noise(gen))));
    else if (slip(gen)) k = truth + (noise(gen) < 0 ? -1 : 1);
    r.k_auto = std::max<count_t>(0, k);
    r.alg_count = r.k_auto;
    r.alg_confidence = difficult ? conf_hard(gen) : conf_easy(gen);
    // Manual ground truth is recorded for every DOP here and dropped below
    // for the records the procedure would not count.
    r.m1 = truth;
    r.m_final = truth;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

int main() {
  test_params params;
  params.nu = 0.15;
  const partition_params part{0.9, 0.35, 0.175};
  const cost_rates rates;

  const auto first = make_plan(params, part, std::nullopt);
  std::printf("plan: n_e=%lld n_rec=%lld (buffered %lld) q=%.3f\n",
              static_cast<long long>(first.n_e), static_cast<long long>(first.n_rec),
              static_cast<long long>(first.buffered_n_rec), first.q_planned);

  auto campaign = synthetic_campaign(static_cast<std::size_t>(first.n_rec), 2024);

  classifier_spec spec{classifier_kind::confidence_only};
  spec.target_share = part.p_s;
  auto labeled = classify(campaign, spec);
  std::printf("classify: p_s_hat=%.3f N_s=%zu\n", labeled.p_s_hat, labeled.n_s);

  const std::size_t counted = sample_campaign(labeled.records, part.q, 7);
  for (auto& r : labeled.records)
    if (r.is_safe() && !r.is_sampled()) {
      r.m1.reset();
      r.m_final.reset();
    }
  std::printf("sample: %zu of %zu safe records counted\n", counted, labeled.n_s);

  const auto rep = evaluate_partitioned(labeled.records, params, part.q);
  std::printf("evaluate: d_hat=%.5f nu_hat=%.4f CI=[%.5f, %.5f] verdict=%s\n", rep.d_hat,
              rep.nu_hat, rep.ci_low, rep.ci_high, std::string(to_string(rep.result)).c_str());

  const auto costs = costs_no_first_count(labeled.records, rates);
  const auto priced = make_plan(params, part, costs.params());
  std::printf("cost: c_u=%.4f c_sZ=%.4f classic=%.2f partitioned=%.2f saving=%.1f%%\n",
              costs.c_u, costs.c_sZ, *priced.cost_classic, *priced.cost_partitioned,
              100.0 * (1.0 - *priced.cost_partitioned / *priced.cost_classic));
  return *priced.cost_partitioned < *priced.cost_classic ? 0 : 1;
}

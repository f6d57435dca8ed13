#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "matchkit/matching.hpp"
#include "matchkit/mechanisms.hpp"
#include "matchkit/rng.hpp"

using namespace matchkit;

namespace {

LinearOrder order_from(const std::vector<int>& best_to_worst) {
  return LinearOrder::from_best_to_worst(best_to_worst);
}

double brute_force_best_reward(const PreferenceProfile& profile, const RewardSpec& spec) {
  double best = -1.0;
  enumerate_matchings(profile.n(), profile.m(), [&](const MatchingMatrix& mu) {
    best = std::max(best, matching_reward(mu, profile, spec));
  });
  return best;
}

Instance dummy_instance(int n, int m) {
  Mat xw(n, 2, 1.0), xf(m, 2, -1.0);
  for (int i = 0; i < n; ++i) xw.at(i, 0) += i;
  for (int j = 0; j < m; ++j) xf.at(j, 0) -= j;
  return Instance(xw, xf);
}

}  // namespace

TEST_CASE("deferred acceptance is stable on random instances") {
  Rng rng(71);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(6));
    const int m = 1 + static_cast<int>(rng.uniform_below(6));
    const PreferenceProfile profile = random_profile(n, m, rng);
    const MatchingMatrix mu = deferred_acceptance(profile);
    CHECK(validate_matching(mu.to_mat(), n, m).empty());
    CHECK(is_individually_rational(mu, profile));
    CHECK(blocking_pairs(mu, profile).empty());
  }
}

TEST_CASE("deferred acceptance corner cases") {
  PreferenceProfile all_single;
  all_single.workers = {order_from({2, 0, 1}), order_from({2, 1, 0})};
  all_single.firms = {order_from({2, 0, 1}), order_from({2, 1, 0})};
  CHECK(deferred_acceptance(all_single) == MatchingMatrix::all_unmatched(2, 2));

  PreferenceProfile aligned;
  aligned.workers = {order_from({0, 1, 2}), order_from({1, 0, 2})};
  aligned.firms = {order_from({0, 1, 2}), order_from({1, 0, 2})};
  CHECK(deferred_acceptance(aligned) == MatchingMatrix::from_pairs(2, 2, {{0, 0}, {1, 1}}));
}

TEST_CASE("worker-proposing DA admits a firm-side manipulation somewhere") {
  Rng rng(72);
  const Mechanism da = [](const Instance&, const PreferenceProfile& prof) {
    return deferred_acceptance(prof);
  };
  // Market with two stable matchings: the firm matched differently across
  // them can force the better one by truncating.
  PreferenceProfile seed;
  seed.workers = {order_from({1, 0, 2, 3}), order_from({0, 1, 2, 3}),
                  order_from({0, 1, 2, 3})};
  seed.firms = {order_from({0, 1, 2, 3}), order_from({1, 0, 2, 3}),
                order_from({0, 1, 2, 3})};
  bool found = false;
  std::vector<PreferenceProfile> candidates{seed};
  for (int t = 0; t < 200; ++t) candidates.push_back(random_profile(3, 3, rng));
  int searched = 0;
  for (const PreferenceProfile& profile : candidates) {
    ++searched;
    for (const SpViolation& v : check_strategy_proofness(da, dummy_instance(3, 3), profile)) {
      if (!v.is_worker) found = true;
    }
    if (found) break;
  }
  INFO("searched " << searched << " instances");
  CHECK(found);
}

TEST_CASE("reward worked examples") {
  // n = m = 2; w1's top firm is f1 and f1's top worker is w1.
  PreferenceProfile p;
  p.workers = {order_from({0, 1, 2}), order_from({1, 0, 2})};
  p.firms = {order_from({0, 1, 2}), order_from({1, 0, 2})};
  CHECK(reward(0, 0, p, RewardSpec::eh()) == 6.0);  // (2+2-1) + (2+2-1)

  // Unmatch row: firm ranks the unmatch option 3rd of 3.
  PreferenceProfile q;
  q.workers = {order_from({0, 1, 2}), order_from({0, 1, 2})};
  q.firms = {order_from({0, 1, 2}), order_from({0, 1, 2})};  // u at rank 3
  CHECK(reward(2, 0, q, RewardSpec::eh()) == 1.0);  // 0 + (2+2-3)

  // MH doubles only the worker-side term of selected workers.
  const RewardSpec mh = RewardSpec::mh({0});
  CHECK(reward(0, 0, p, mh) == 9.0);   // 2*3 + 3
  CHECK(reward(1, 1, p, mh) == 6.0);   // unselected worker

  CHECK_THROWS_AS(reward(2, 2, p, RewardSpec::eh()), std::out_of_range);
}

TEST_CASE("hungarian assignment on a dominant diagonal") {
  Mat rewards(2, 2);
  rewards.data = {3, 1, 1, 3};
  const std::vector<int> assign = hungarian_max_assignment(rewards);
  CHECK(assign == std::vector<int>{0, 1});
}

TEST_CASE("hungarian assignment equals factorial brute force") {
  Rng rng(73);
  for (int t = 0; t < 200; ++t) {
    const int k = 1 + static_cast<int>(rng.uniform_below(5));
    Mat rewards(k, k);
    for (double& v : rewards.data) v = std::round(rng.normal() * 50.0);
    const std::vector<int> assign = hungarian_max_assignment(rewards);
    double got = 0.0;
    for (int i = 0; i < k; ++i) got += rewards.at(i, assign[static_cast<std::size_t>(i)]);

    std::vector<int> perm(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
    double best = -1e300;
    do {
      double total = 0.0;
      for (int i = 0; i < k; ++i) total += rewards.at(i, perm[static_cast<std::size_t>(i)]);
      best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == best);
  }
}

TEST_CASE("hungarian matching achieves the brute-force optimum over matchings") {
  Rng rng(74);
  for (int t = 0; t < 120; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(4));
    const int m = 1 + static_cast<int>(rng.uniform_below(4));
    const PreferenceProfile profile = random_profile(n, m, rng);
    RewardSpec spec = RewardSpec::eh();
    if (n >= 3 && rng.uniform_below(2) == 1) {
      const auto perm = rng.permutation(n);
      spec = RewardSpec::mh(std::vector<int>(perm.begin(), perm.begin() + n / 3));
    }
    const MatchingMatrix mu = hungarian_matching(profile, spec);
    CHECK(validate_matching(mu.to_mat(), n, m).empty());
    CHECK(matching_reward(mu, profile, spec) == brute_force_best_reward(profile, spec));
  }
}

TEST_CASE("hungarian matching is Pareto efficient") {
  Rng rng(75);
  for (int t = 0; t < 40; ++t) {
    const PreferenceProfile profile = random_profile(3, 3, rng);
    CHECK(is_pareto_efficient(hungarian_matching(profile, RewardSpec::eh()), profile));
  }
}

TEST_CASE("all agents preferring unmatch makes all-unmatched optimal") {
  PreferenceProfile p;
  p.workers = {order_from({2, 0, 1}), order_from({2, 1, 0})};
  p.firms = {order_from({2, 0, 1}), order_from({2, 1, 0})};
  const MatchingMatrix mu = hungarian_matching(p, RewardSpec::eh());
  CHECK(matching_reward(mu, p, RewardSpec::eh()) == brute_force_best_reward(p, RewardSpec::eh()));
  CHECK(mu == MatchingMatrix::all_unmatched(2, 2));
}

TEST_CASE("MH with nobody selected coincides with EH") {
  Rng rng(76);
  for (int t = 0; t < 30; ++t) {
    const PreferenceProfile profile = random_profile(2, 2, rng);
    CHECK(hungarian_matching(profile, RewardSpec::mh({})) ==
          hungarian_matching(profile, RewardSpec::eh()));
  }
}

TEST_CASE("rsd is deterministic under a fixed seed") {
  Rng rng(77);
  const PreferenceProfile profile = random_profile(4, 4, rng);
  Rng a(123), b(123);
  CHECK(rsd(profile, a) == rsd(profile, b));
}

TEST_CASE("rsd samples rankings uniformly") {
  // n + m = 3 has 6 rankings; frequencies should match 1/6 within 0.02.
  PreferenceProfile p;
  p.workers = {order_from({0, 1, 2}), order_from({1, 0, 2})};
  p.firms = {order_from({0, 1, 2})};
  Rng rng(78);
  std::map<std::vector<int>, int> counts;
  const int trials = 30000;
  for (int t = 0; t < trials; ++t) counts[rng.permutation(3)]++;
  CHECK(counts.size() == 6);
  for (const auto& [perm, c] : counts) {
    CHECK(std::fabs(static_cast<double>(c) / trials - 1.0 / 6.0) < 0.02);
  }
}

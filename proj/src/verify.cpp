#include "matchkit/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "matchkit/datagen.hpp"
#include "matchkit/mechanisms.hpp"
#include "matchkit/metrics.hpp"
#include "matchkit/neuralsd.hpp"
#include "matchkit/tsd.hpp"

namespace matchkit {

namespace {

Instance random_instance(int n, int m, int d, Rng& rng) {
  auto [xw, xf] = sample_contexts(n, m, d, rng);
  return Instance(std::move(xw), std::move(xf));
}

void note_failure(VerifyReport& report, const std::string& what) {
  report.pass = false;
  if (report.failures.size() < 20) report.failures.push_back(what);
}

}  // namespace

VerifyReport verify_tsd_equiv(int trials, std::uint64_t seed) {
  VerifyReport report{.suite = "tsd-equiv"};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(6));
    const int m = 1 + static_cast<int>(rng.uniform_below(6));
    const PreferenceProfile profile = random_profile(n, m, rng);
    const Ranking ranking{rng.permutation(n + m)};
    const Mat got = tsd_forward(build_preference_tensor(profile), build_ranking_matrix(ranking, n, m));
    const Mat want = run_sd(profile, ranking).to_mat();
    if (!(got == want)) {
      std::ostringstream os;
      os << "trial " << t << " (n=" << n << ", m=" << m << "): TSD differs from SD";
      note_failure(report, os.str());
    }
  }
  report.stats["trials"] = trials;
  return report;
}

VerifyReport verify_sp(int trials, std::uint64_t seed) {
  VerifyReport report{.suite = "sp"};
  Rng rng(seed);
  const int n = 3, m = 3;
  for (int t = 0; t < trials; ++t) {
    const PreferenceProfile profile = random_profile(n, m, rng);
    const Instance instance = random_instance(n, m, 10, rng);

    const Ranking fixed{rng.permutation(n + m)};
    const Mechanism sd_mech = [&fixed](const Instance&, const PreferenceProfile& prof) {
      return run_sd(prof, fixed);
    };
    if (!check_strategy_proofness(sd_mech, instance, profile).empty()) {
      note_failure(report, "SD with a fixed ranking admitted a profitable misreport at trial " +
                               std::to_string(t));
    }

    const RankingParams params = RankingParams::init(10, 10, 0.1, rng.next_u64());
    const Mechanism neural = [&params](const Instance& inst, const PreferenceProfile& prof) {
      return forward_infer(prof, inst, params);
    };
    if (!check_strategy_proofness(neural, instance, profile).empty()) {
      note_failure(report, "NeuralSD inference admitted a profitable misreport at trial " +
                               std::to_string(t));
    }
  }
  report.stats["trials"] = trials;
  return report;
}

VerifyReport verify_pareto(int trials, std::uint64_t seed) {
  VerifyReport report{.suite = "pareto"};
  Rng rng(seed);
  const int n = 3, m = 3;
  for (int t = 0; t < trials; ++t) {
    const PreferenceProfile profile = random_profile(n, m, rng);
    const Ranking ranking{rng.permutation(n + m)};
    if (!is_pareto_efficient(run_sd(profile, ranking), profile)) {
      note_failure(report, "SD output Pareto dominated at trial " + std::to_string(t));
    }
    const Instance instance = random_instance(n, m, 10, rng);
    const RankingParams params = RankingParams::init(10, 10, 0.1, rng.next_u64());
    if (!is_pareto_efficient(forward_infer(profile, instance, params), profile)) {
      note_failure(report, "NeuralSD output Pareto dominated at trial " + std::to_string(t));
    }
  }
  report.stats["trials"] = trials;
  return report;
}

namespace {

// Worst case for IR: worker i, active, takes firm i; firm i ranks every
// worker below the unmatch option with its arriving partner dead last, which
// drives its preference value for the partner to exactly -1.
PreferenceProfile adversarial_irv_profile(int n) {
  PreferenceProfile profile;
  for (int i = 0; i < n; ++i) {
    std::vector<int> best_to_worst;
    best_to_worst.push_back(i);  // firm i first
    for (int j = 0; j < n; ++j) {
      if (j != i) best_to_worst.push_back(j);
    }
    best_to_worst.push_back(n);  // unmatch last
    profile.workers.push_back(LinearOrder::from_best_to_worst(best_to_worst));
  }
  for (int j = 0; j < n; ++j) {
    std::vector<int> best_to_worst;
    best_to_worst.push_back(n);  // unmatch first
    for (int i = 0; i < n; ++i) {
      if (i != j) best_to_worst.push_back(i);
    }
    best_to_worst.push_back(j);  // the arriving partner dead last
    profile.firms.push_back(LinearOrder::from_best_to_worst(best_to_worst));
  }
  return profile;
}

}  // namespace

VerifyReport verify_irv(int trials, std::uint64_t seed) {
  VerifyReport report{.suite = "irv"};
  Rng rng(seed);
  double max_irv = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(8));
    const int m = 1 + static_cast<int>(rng.uniform_below(8));
    const PreferenceProfile profile = random_profile(n, m, rng);
    const Ranking ranking{rng.permutation(n + m)};
    const MatchingMatrix matching = run_sd(profile, ranking);
    max_irv = std::max(max_irv, ir_violation_general(matching, profile));
    if (!irv_within_half(matching, profile)) {
      note_failure(report, "IRV exceeded 1/2 at trial " + std::to_string(t));
    }
  }
  // Adversarial construction: workers first in the ranking, each taking a
  // distinct firm that ranks them last; IRV reaches exactly 1/2.
  double adversarial_min = 1.0;
  for (int n : {2, 4, 8}) {
    const PreferenceProfile profile = adversarial_irv_profile(n);
    Ranking ranking;
    for (int a = 0; a < 2 * n; ++a) ranking.order.push_back(a);
    const MatchingMatrix matching = run_sd(profile, ranking);
    const double irv = ir_violation_general(matching, profile);
    max_irv = std::max(max_irv, irv);
    adversarial_min = std::min(adversarial_min, irv);
    if (!irv_within_half(matching, profile)) {
      note_failure(report, "adversarial IRV exceeded 1/2 at n=" + std::to_string(n));
    }
    if (irv < 0.45) {
      note_failure(report, "adversarial IRV fell short of 0.45 at n=" + std::to_string(n));
    }
  }
  report.stats["trials"] = trials;
  report.stats["max_irv"] = max_irv;
  report.stats["adversarial_irv"] = adversarial_min;
  return report;
}

VerifyReport verify_hungarian(int trials, std::uint64_t seed) {
  VerifyReport report{.suite = "hungarian"};
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(4));
    const PreferenceProfile profile = random_profile(n, n, rng);
    RewardSpec spec = RewardSpec::eh();
    if (rng.uniform_below(2) == 1 && n >= 3) {
      const std::vector<int> perm = rng.permutation(n);
      spec = RewardSpec::mh(std::vector<int>(perm.begin(), perm.begin() + n / 3));
    }
    const MatchingMatrix got = hungarian_matching(profile, spec);
    double best = -1.0;
    enumerate_matchings(n, n, [&](const MatchingMatrix& candidate) {
      best = std::max(best, matching_reward(candidate, profile, spec));
    });
    const double achieved = matching_reward(got, profile, spec);
    if (achieved != best) {
      std::ostringstream os;
      os << "trial " << t << ": objective " << achieved << " below brute-force optimum " << best;
      note_failure(report, os.str());
    }
  }
  report.stats["trials"] = trials;
  return report;
}

std::vector<VerifyReport> verify_all(int trials, std::uint64_t seed) {
  return {verify_tsd_equiv(trials, seed), verify_sp(std::min(trials, 50), seed),
          verify_pareto(std::min(trials, 200), seed), verify_irv(trials, seed),
          verify_hungarian(std::min(trials, 200), seed)};
}

}  // namespace matchkit

#pragma once

#include <vector>

#include "matchkit/dense.hpp"
#include "matchkit/matching.hpp"
#include "matchkit/rng.hpp"

namespace matchkit {

// Worker-proposing deferred acceptance with unmatch options; output is stable.
MatchingMatrix deferred_acceptance(const PreferenceProfile& profile);

// Reward weighting for the Hungarian example mechanisms. EH weighs all
// workers equally; MH doubles the weight of the selected workers.
struct RewardSpec {
  enum class Kind { EH, MH };
  Kind kind = Kind::EH;
  std::vector<int> selected;  // MH only

  static RewardSpec eh() { return RewardSpec{}; }
  static RewardSpec mh(std::vector<int> selected_workers);

  double alpha(int worker) const;
};

// r(i, j) = alpha(i) * invord(option j under worker i) + invord(option i under
// firm j); i = n or j = m addresses the unmatch row/column, whose own
// "preference" contributes zero. Indices are 0-based; both unmatch is invalid.
double reward(int i, int j, const PreferenceProfile& profile, const RewardSpec& spec);

// Total reward of a matching under the spec (the Appendix objective).
double matching_reward(const MatchingMatrix& matching, const PreferenceProfile& profile,
                       const RewardSpec& spec);

// Exact maximum-total-reward perfect assignment on a square matrix
// (Jonker-Volgenant style shortest augmenting paths); returns row -> column.
std::vector<int> hungarian_max_assignment(const Mat& rewards);

// Solves the reward-maximization program by reduction to a square assignment:
// rows are workers then per-firm unmatch slots, columns are firms then
// per-worker unmatch slots; foreign dummy pairings are forbidden.
MatchingMatrix hungarian_matching(const PreferenceProfile& profile, const RewardSpec& spec);

// Uniformly random ranking, then SD.
MatchingMatrix rsd(const PreferenceProfile& profile, Rng& rng);

}  // namespace matchkit

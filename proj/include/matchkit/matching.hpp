#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "matchkit/dense.hpp"
#include "matchkit/rng.hpp"

namespace matchkit {

class Rng;

// One agent's strict preference over the opposite side plus the unmatch
// option. Options are 0-based: 0..k-1 address the opposite side, k is the
// unmatch option. Ranks are 1-based (1 = most preferred).
class LinearOrder {
 public:
  // rank_of[option] = rank; must be a permutation of 1..k+1.
  explicit LinearOrder(std::vector<int> rank_of);

  // Builds from a best-to-worst listing of all k+1 option indices.
  static LinearOrder from_best_to_worst(const std::vector<int>& options);

  int num_options() const { return static_cast<int>(rank_of_.size()); }
  int unmatch_option() const { return num_options() - 1; }

  // ord: number of options weakly preferred to `option` (its 1-based rank).
  int ord(int option) const;
  // Inverse lookup: the option holding the given 1-based rank.
  int option_at(int rank) const;
  bool prefers(int a, int b) const { return ord(a) < ord(b); }

  const std::vector<int>& ranks() const { return rank_of_; }
  bool operator==(const LinearOrder&) const = default;

 private:
  std::vector<int> rank_of_;
  std::vector<int> option_at_;
};

struct PreferenceProfile {
  std::vector<LinearOrder> workers;  // n orders over m+1 options
  std::vector<LinearOrder> firms;    // m orders over n+1 options

  int n() const { return static_cast<int>(workers.size()); }
  int m() const { return static_cast<int>(firms.size()); }
  bool operator==(const PreferenceProfile&) const = default;
};

struct Instance {
  int n = 0;
  int m = 0;
  int d = 0;
  Mat contexts_w;  // n x d
  Mat contexts_f;  // m x d

  Instance() = default;
  Instance(Mat xw, Mat xf);
  bool operator==(const Instance&) const = default;
};

// One-to-one matching with unmatch row/column; always valid by construction.
// Workers 0..n-1, firms 0..m-1; partner index m (resp. n) means unmatched.
class MatchingMatrix {
 public:
  static MatchingMatrix all_unmatched(int n, int m);
  // Remaining agents are unmatched. Throws on duplicate/out-of-range pairs.
  static MatchingMatrix from_pairs(int n, int m, const std::vector<std::pair<int, int>>& pairs);
  // Validates the raw (n+1)x(m+1) binary matrix; throws if not a matching.
  static MatchingMatrix from_mat(const Mat& entries, int n, int m);

  int n() const { return static_cast<int>(worker_partner_.size()); }
  int m() const { return static_cast<int>(firm_partner_.size()); }
  int worker_partner(int i) const { return worker_partner_[static_cast<std::size_t>(i)]; }
  int firm_partner(int j) const { return firm_partner_[static_cast<std::size_t>(j)]; }
  bool matched(int i, int j) const { return worker_partner(i) == j; }

  // Entry of the (n+1)x(m+1) matrix representation.
  double at(int i, int j) const;
  Mat to_mat() const;
  std::vector<std::pair<int, int>> pairs() const;

  bool operator==(const MatchingMatrix&) const = default;

 private:
  MatchingMatrix(std::vector<int> wp, std::vector<int> fp)
      : worker_partner_(std::move(wp)), firm_partner_(std::move(fp)) {}
  std::vector<int> worker_partner_;
  std::vector<int> firm_partner_;
};

// Agent ranking: order[k] = global agent index holding rank k (0-based).
// Workers occupy global indices 0..n-1, firms n..n+m-1.
struct Ranking {
  std::vector<int> order;

  int size() const { return static_cast<int>(order.size()); }
  bool operator==(const Ranking&) const = default;
};

void validate_ranking(const Ranking& r, int n, int m);

// Serial dictatorship under a fixed agent ranking. Each still-unmatched agent,
// in rank order, takes its most preferred still-unmatched partner, or the
// unmatch option when no remaining partner beats it. Agents matched to the
// unmatch option cannot be designated later.
MatchingMatrix run_sd(const PreferenceProfile& profile, const Ranking& ranking);

// Accumulated matching matrix after the first `rounds` SD rounds (rows of
// unprocessed agents are all zero, so the result is generally not a matching).
Mat run_sd_partial(const PreferenceProfile& profile, const Ranking& ranking, int rounds);

// Row/column-sum and corner checks on a raw matrix; returns all violations.
std::vector<std::string> validate_matching(const Mat& entries, int n, int m);

// All (worker, firm) pairs who both strictly prefer each other to their
// current partners.
std::vector<std::pair<int, int>> blocking_pairs(const MatchingMatrix& matching,
                                                const PreferenceProfile& profile);

bool is_individually_rational(const MatchingMatrix& matching, const PreferenceProfile& profile);

bool is_stable(const MatchingMatrix& matching, const PreferenceProfile& profile);

// Exhaustive Pareto-efficiency check; refuses n, m > 5.
bool is_pareto_efficient(const MatchingMatrix& matching, const PreferenceProfile& profile);

// Invokes fn on every matching over n workers and m firms.
void enumerate_matchings(int n, int m, const std::function<void(const MatchingMatrix&)>& fn);

// Payoff u_a: number of options weakly below the agent's partner in its true
// order (higher is better).
int agent_payoff(const LinearOrder& true_order, int partner_option);

using Mechanism = std::function<MatchingMatrix(const Instance&, const PreferenceProfile&)>;

struct SpViolation {
  bool is_worker = false;
  int agent = 0;  // side-local index
  LinearOrder misreport;
  int truthful_payoff = 0;
  int misreport_payoff = 0;
};

// Exhaustive misreport search per Eq. (1): for every agent and every
// alternative order, the truthful payoff must be at least the misreport
// payoff, both evaluated under the agent's true preference. Refuses
// opposite-side sizes above 4 (factorial enumeration).
std::vector<SpViolation> check_strategy_proofness(const Mechanism& mechanism,
                                                  const Instance& instance,
                                                  const PreferenceProfile& profile);

// All strict orders over k+1 options, in lexicographic best-to-worst order.
std::vector<LinearOrder> all_linear_orders(int num_options);

LinearOrder random_linear_order(int num_options, Rng& rng);
PreferenceProfile random_profile(int n, int m, Rng& rng);

}  // namespace matchkit

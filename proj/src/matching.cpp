#include "matchkit/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace matchkit {

LinearOrder::LinearOrder(std::vector<int> rank_of) : rank_of_(std::move(rank_of)) {
  const int k1 = static_cast<int>(rank_of_.size());
  if (k1 < 1) throw std::invalid_argument("LinearOrder: empty rank array");
  option_at_.assign(static_cast<std::size_t>(k1), -1);
  for (int opt = 0; opt < k1; ++opt) {
    const int r = rank_of_[static_cast<std::size_t>(opt)];
    if (r < 1 || r > k1 || option_at_[static_cast<std::size_t>(r - 1)] != -1) {
      throw std::invalid_argument("LinearOrder: ranks must be a permutation of 1..k+1");
    }
    option_at_[static_cast<std::size_t>(r - 1)] = opt;
  }
}

LinearOrder LinearOrder::from_best_to_worst(const std::vector<int>& options) {
  const int k1 = static_cast<int>(options.size());
  std::vector<int> rank_of(static_cast<std::size_t>(k1), 0);
  for (int r = 0; r < k1; ++r) {
    const int opt = options[static_cast<std::size_t>(r)];
    if (opt < 0 || opt >= k1) throw std::invalid_argument("LinearOrder: option out of range");
    rank_of[static_cast<std::size_t>(opt)] = r + 1;
  }
  return LinearOrder(std::move(rank_of));
}

int LinearOrder::ord(int option) const {
  if (option < 0 || option >= num_options()) {
    throw std::out_of_range("LinearOrder::ord: option out of range");
  }
  return rank_of_[static_cast<std::size_t>(option)];
}

int LinearOrder::option_at(int rank) const {
  if (rank < 1 || rank > num_options()) {
    throw std::out_of_range("LinearOrder::option_at: rank out of range");
  }
  return option_at_[static_cast<std::size_t>(rank - 1)];
}

Instance::Instance(Mat xw, Mat xf)
    : n(xw.rows), m(xf.rows), d(xw.cols), contexts_w(std::move(xw)), contexts_f(std::move(xf)) {
  if (n < 1 || m < 1 || d < 1) throw std::invalid_argument("Instance: n, m, d must be >= 1");
  if (contexts_f.cols != d) throw std::invalid_argument("Instance: context dimension mismatch");
  for (double v : contexts_w.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("Instance: non-finite worker context");
  }
  for (double v : contexts_f.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("Instance: non-finite firm context");
  }
}

MatchingMatrix MatchingMatrix::all_unmatched(int n, int m) {
  return MatchingMatrix(std::vector<int>(static_cast<std::size_t>(n), m),
                        std::vector<int>(static_cast<std::size_t>(m), n));
}

MatchingMatrix MatchingMatrix::from_pairs(int n, int m,
                                          const std::vector<std::pair<int, int>>& pairs) {
  std::vector<int> wp(static_cast<std::size_t>(n), m);
  std::vector<int> fp(static_cast<std::size_t>(m), n);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= n || j < 0 || j >= m) {
      throw std::invalid_argument("MatchingMatrix::from_pairs: index out of range");
    }
    if (wp[static_cast<std::size_t>(i)] != m || fp[static_cast<std::size_t>(j)] != n) {
      throw std::invalid_argument("MatchingMatrix::from_pairs: agent matched twice");
    }
    wp[static_cast<std::size_t>(i)] = j;
    fp[static_cast<std::size_t>(j)] = i;
  }
  return MatchingMatrix(std::move(wp), std::move(fp));
}

MatchingMatrix MatchingMatrix::from_mat(const Mat& entries, int n, int m) {
  const auto violations = validate_matching(entries, n, m);
  if (!violations.empty()) {
    throw std::invalid_argument("MatchingMatrix::from_mat: " + violations.front());
  }
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (entries.at(i, j) == 1.0) pairs.emplace_back(i, j);
    }
  }
  return from_pairs(n, m, pairs);
}

double MatchingMatrix::at(int i, int j) const {
  const int nn = n();
  const int mm = m();
  if (i < nn && j < mm) return matched(i, j) ? 1.0 : 0.0;
  if (i < nn && j == mm) return worker_partner(i) == mm ? 1.0 : 0.0;
  if (i == nn && j < mm) return firm_partner(j) == nn ? 1.0 : 0.0;
  return 0.0;  // corner is fixed to zero
}

Mat MatchingMatrix::to_mat() const {
  Mat out(n() + 1, m() + 1, 0.0);
  for (int i = 0; i <= n(); ++i) {
    for (int j = 0; j <= m(); ++j) out.at(i, j) = at(i, j);
  }
  return out;
}

std::vector<std::pair<int, int>> MatchingMatrix::pairs() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n(); ++i) {
    if (worker_partner(i) != m()) out.emplace_back(i, worker_partner(i));
  }
  return out;
}

void validate_ranking(const Ranking& r, int n, int m) {
  if (r.size() != n + m) throw std::invalid_argument("Ranking: wrong length");
  std::vector<bool> seen(static_cast<std::size_t>(n + m), false);
  for (int a : r.order) {
    if (a < 0 || a >= n + m || seen[static_cast<std::size_t>(a)]) {
      throw std::invalid_argument("Ranking: not a permutation of agents");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
}

namespace {

// Shared SD loop. Returns per-side partner arrays after `rounds` rounds;
// UNSET marks agents not yet processed.
constexpr int kUnset = -1;

struct SdState {
  std::vector<int> worker_to;  // firm index, m for unmatch, kUnset if open
  std::vector<int> firm_to;
};

SdState sd_rounds(const PreferenceProfile& profile, const Ranking& ranking, int rounds) {
  const int n = profile.n();
  const int m = profile.m();
  validate_ranking(ranking, n, m);
  SdState st{std::vector<int>(static_cast<std::size_t>(n), kUnset),
             std::vector<int>(static_cast<std::size_t>(m), kUnset)};
  for (int k = 0; k < rounds; ++k) {
    const int agent = ranking.order[static_cast<std::size_t>(k)];
    if (agent < n) {
      const int i = agent;
      if (st.worker_to[static_cast<std::size_t>(i)] != kUnset) continue;
      const LinearOrder& pref = profile.workers[static_cast<std::size_t>(i)];
      for (int r = 1; r <= pref.num_options(); ++r) {
        const int opt = pref.option_at(r);
        if (opt == pref.unmatch_option()) {
          st.worker_to[static_cast<std::size_t>(i)] = m;
          break;
        }
        if (st.firm_to[static_cast<std::size_t>(opt)] == kUnset) {
          st.worker_to[static_cast<std::size_t>(i)] = opt;
          st.firm_to[static_cast<std::size_t>(opt)] = i;
          break;
        }
      }
    } else {
      const int j = agent - n;
      if (st.firm_to[static_cast<std::size_t>(j)] != kUnset) continue;
      const LinearOrder& pref = profile.firms[static_cast<std::size_t>(j)];
      for (int r = 1; r <= pref.num_options(); ++r) {
        const int opt = pref.option_at(r);
        if (opt == pref.unmatch_option()) {
          st.firm_to[static_cast<std::size_t>(j)] = n;
          break;
        }
        if (st.worker_to[static_cast<std::size_t>(opt)] == kUnset) {
          st.firm_to[static_cast<std::size_t>(j)] = opt;
          st.worker_to[static_cast<std::size_t>(opt)] = j;
          break;
        }
      }
    }
  }
  return st;
}

}  // namespace

MatchingMatrix run_sd(const PreferenceProfile& profile, const Ranking& ranking) {
  const int n = profile.n();
  const int m = profile.m();
  const SdState st = sd_rounds(profile, ranking, n + m);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    if (st.worker_to[static_cast<std::size_t>(i)] != m) {
      pairs.emplace_back(i, st.worker_to[static_cast<std::size_t>(i)]);
    }
  }
  return MatchingMatrix::from_pairs(n, m, pairs);
}

Mat run_sd_partial(const PreferenceProfile& profile, const Ranking& ranking, int rounds) {
  const int n = profile.n();
  const int m = profile.m();
  if (rounds < 0 || rounds > n + m) throw std::invalid_argument("run_sd_partial: bad round count");
  const SdState st = sd_rounds(profile, ranking, rounds);
  Mat out(n + 1, m + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    const int to = st.worker_to[static_cast<std::size_t>(i)];
    if (to != kUnset) out.at(i, to) = 1.0;
  }
  for (int j = 0; j < m; ++j) {
    if (st.firm_to[static_cast<std::size_t>(j)] == n) out.at(n, j) = 1.0;
  }
  return out;
}

std::vector<std::string> validate_matching(const Mat& entries, int n, int m) {
  std::vector<std::string> violations;
  if (entries.rows != n + 1 || entries.cols != m + 1) {
    violations.push_back("shape is not (n+1)x(m+1)");
    return violations;
  }
  for (double v : entries.data) {
    if (v != 0.0 && v != 1.0) {
      violations.push_back("entries are not binary");
      break;
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j <= m; ++j) s += entries.at(i, j);
    if (s != 1.0) violations.push_back("row " + std::to_string(i + 1) + " sums to " + std::to_string(s));
  }
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int i = 0; i <= n; ++i) s += entries.at(i, j);
    if (s != 1.0) violations.push_back("column " + std::to_string(j + 1) + " sums to " + std::to_string(s));
  }
  if (entries.at(n, m) != 0.0) violations.push_back("corner entry (n+1, m+1) is nonzero");
  return violations;
}

std::vector<std::pair<int, int>> blocking_pairs(const MatchingMatrix& matching,
                                                const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  if (matching.n() != n || matching.m() != m) {
    throw std::invalid_argument("blocking_pairs: dimension mismatch");
  }
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    const LinearOrder& wp = profile.workers[static_cast<std::size_t>(i)];
    const int wcur = matching.worker_partner(i);  // option index (m = unmatch)
    for (int j = 0; j < m; ++j) {
      if (!wp.prefers(j, wcur)) continue;
      const LinearOrder& fp = profile.firms[static_cast<std::size_t>(j)];
      const int fcur = matching.firm_partner(j);
      if (fp.prefers(i, fcur)) out.emplace_back(i, j);
    }
  }
  return out;
}

bool is_individually_rational(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  for (int i = 0; i < profile.n(); ++i) {
    const LinearOrder& o = profile.workers[static_cast<std::size_t>(i)];
    if (o.ord(matching.worker_partner(i)) > o.ord(o.unmatch_option())) return false;
  }
  for (int j = 0; j < profile.m(); ++j) {
    const LinearOrder& o = profile.firms[static_cast<std::size_t>(j)];
    if (o.ord(matching.firm_partner(j)) > o.ord(o.unmatch_option())) return false;
  }
  return true;
}

bool is_stable(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  return is_individually_rational(matching, profile) && blocking_pairs(matching, profile).empty();
}

void enumerate_matchings(int n, int m, const std::function<void(const MatchingMatrix&)>& fn) {
  std::vector<int> assignment(static_cast<std::size_t>(n), m);
  std::vector<bool> firm_used(static_cast<std::size_t>(m), false);
  std::vector<std::pair<int, int>> pairs;
  const std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      fn(MatchingMatrix::from_pairs(n, m, pairs));
      return;
    }
    rec(i + 1);  // worker i unmatched
    for (int j = 0; j < m; ++j) {
      if (firm_used[static_cast<std::size_t>(j)]) continue;
      firm_used[static_cast<std::size_t>(j)] = true;
      pairs.emplace_back(i, j);
      rec(i + 1);
      pairs.pop_back();
      firm_used[static_cast<std::size_t>(j)] = false;
    }
  };
  rec(0);
}

namespace {

bool pareto_dominates(const MatchingMatrix& a, const MatchingMatrix& b,
                      const PreferenceProfile& profile) {
  bool strict = false;
  for (int i = 0; i < profile.n(); ++i) {
    const LinearOrder& o = profile.workers[static_cast<std::size_t>(i)];
    const int ra = o.ord(a.worker_partner(i));
    const int rb = o.ord(b.worker_partner(i));
    if (ra > rb) return false;
    if (ra < rb) strict = true;
  }
  for (int j = 0; j < profile.m(); ++j) {
    const LinearOrder& o = profile.firms[static_cast<std::size_t>(j)];
    const int ra = o.ord(a.firm_partner(j));
    const int rb = o.ord(b.firm_partner(j));
    if (ra > rb) return false;
    if (ra < rb) strict = true;
  }
  return strict;
}

}  // namespace

bool is_pareto_efficient(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  if (n > 5 || m > 5) {
    throw std::invalid_argument("is_pareto_efficient: instance too large for exhaustive check");
  }
  bool efficient = true;
  enumerate_matchings(n, m, [&](const MatchingMatrix& other) {
    if (efficient && pareto_dominates(other, matching, profile)) efficient = false;
  });
  return efficient;
}

int agent_payoff(const LinearOrder& true_order, int partner_option) {
  return true_order.num_options() + 1 - true_order.ord(partner_option);
}

std::vector<LinearOrder> all_linear_orders(int num_options) {
  std::vector<int> best_to_worst(static_cast<std::size_t>(num_options));
  std::iota(best_to_worst.begin(), best_to_worst.end(), 0);
  std::vector<LinearOrder> out;
  do {
    out.push_back(LinearOrder::from_best_to_worst(best_to_worst));
  } while (std::next_permutation(best_to_worst.begin(), best_to_worst.end()));
  return out;
}

std::vector<SpViolation> check_strategy_proofness(const Mechanism& mechanism,
                                                  const Instance& instance,
                                                  const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  if (m > 4 || n > 4) {
    throw std::invalid_argument("check_strategy_proofness: enumeration budget exceeded");
  }
  std::vector<SpViolation> violations;
  const MatchingMatrix truthful = mechanism(instance, profile);

  const auto scan_side = [&](bool worker_side, int count) {
    for (int a = 0; a < count; ++a) {
      const LinearOrder& true_order =
          worker_side ? profile.workers[static_cast<std::size_t>(a)]
                      : profile.firms[static_cast<std::size_t>(a)];
      const int truthful_partner =
          worker_side ? truthful.worker_partner(a) : truthful.firm_partner(a);
      const int truthful_payoff = agent_payoff(true_order, truthful_partner);
      for (const LinearOrder& lie : all_linear_orders(true_order.num_options())) {
        if (lie == true_order) continue;
        PreferenceProfile altered = profile;
        if (worker_side) {
          altered.workers[static_cast<std::size_t>(a)] = lie;
        } else {
          altered.firms[static_cast<std::size_t>(a)] = lie;
        }
        const MatchingMatrix outcome = mechanism(instance, altered);
        const int partner = worker_side ? outcome.worker_partner(a) : outcome.firm_partner(a);
        const int payoff = agent_payoff(true_order, partner);  // true preference
        if (payoff > truthful_payoff) {
          violations.push_back({worker_side, a, lie, truthful_payoff, payoff});
        }
      }
    }
  };
  scan_side(true, n);
  scan_side(false, m);
  return violations;
}

LinearOrder random_linear_order(int num_options, Rng& rng) {
  std::vector<int> perm = rng.permutation(num_options);
  return LinearOrder::from_best_to_worst(perm);
}

PreferenceProfile random_profile(int n, int m, Rng& rng) {
  PreferenceProfile p;
  p.workers.reserve(static_cast<std::size_t>(n));
  p.firms.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) p.workers.push_back(random_linear_order(m + 1, rng));
  for (int j = 0; j < m; ++j) p.firms.push_back(random_linear_order(n + 1, rng));
  return p;
}

}  // namespace matchkit

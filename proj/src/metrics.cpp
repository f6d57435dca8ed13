#include "matchkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace matchkit {

double hamming_distance(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument("hamming_distance: shape mismatch");
  }
  if (a.rows != a.cols) {
    throw std::invalid_argument("hamming_distance: normalization requires n = m");
  }
  const int n = a.rows - 1;
  double s = 0.0;
  for (std::size_t e = 0; e < a.data.size(); ++e) s += std::fabs(a.data[e] - b.data[e]);
  return s / (3.0 * n);
}

int hamming_raw(const MatchingMatrix& a, const MatchingMatrix& b) {
  if (a.n() != b.n() || a.m() != b.m()) {
    throw std::invalid_argument("hamming_raw: shape mismatch");
  }
  int s = 0;
  for (int i = 0; i <= a.n(); ++i) {
    for (int j = 0; j <= a.m(); ++j) s += a.at(i, j) != b.at(i, j) ? 1 : 0;
  }
  return s;
}

double num_blocking_pairs(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  const int n = profile.n();
  if (n != profile.m()) throw std::invalid_argument("num_blocking_pairs: requires n = m");
  return static_cast<double>(blocking_pairs(matching, profile).size()) /
         (static_cast<double>(n) * n);
}

namespace {

// Integer numerator of the centered preference value: the value itself is
// count / (#opposite agents), with the unmatch option at exactly 0.
int preference_count(const LinearOrder& order, int option) {
  const int k = order.num_options() - 1;  // opposite-side size
  const int u = order.unmatch_option();
  int count = order.prefers(option, u) ? 1 : 0;
  for (int other = 0; other < k; ++other) {
    if (order.prefers(option, other)) ++count;
    if (order.prefers(u, other)) --count;
  }
  return count;
}

}  // namespace

PreferenceVectors preference_vectors(const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  PreferenceVectors pv{Mat(n, m, 0.0), Mat(m, n, 0.0)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      pv.p.at(i, j) = static_cast<double>(preference_count(profile.workers[static_cast<std::size_t>(i)], j)) / m;
    }
  }
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      pv.q.at(j, i) = static_cast<double>(preference_count(profile.firms[static_cast<std::size_t>(j)], i)) / n;
    }
  }
  return pv;
}

double stv_raw(const Mat& matching, const PreferenceProfile& profile) {
  const int n = profile.n();
  if (n != profile.m()) throw std::invalid_argument("stv_raw: requires n = m");
  if (matching.rows != n + 1 || matching.cols != n + 1) {
    throw std::invalid_argument("stv_raw: matrix must be (n+1)x(n+1)");
  }
  const PreferenceVectors pv = preference_vectors(profile);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double firm_gain = 0.0;
      for (int i2 = 0; i2 < n; ++i2) {
        firm_gain += matching.at(i2, j) * std::max(pv.q.at(j, i) - pv.q.at(j, i2), 0.0);
      }
      double worker_gain = 0.0;
      for (int j2 = 0; j2 < n; ++j2) {
        worker_gain += matching.at(i, j2) * std::max(pv.p.at(i, j) - pv.p.at(i, j2), 0.0);
      }
      total += firm_gain * worker_gain;
    }
  }
  return total / n;
}

double stability_violation(const Mat& matching, const PreferenceProfile& profile) {
  return stv_raw(matching, profile) / profile.n();
}

double ir_violation(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  if (profile.n() != profile.m()) throw std::invalid_argument("ir_violation: requires n = m");
  return ir_violation_general(matching, profile);
}

double ir_violation_general(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  const PreferenceVectors pv = preference_vectors(profile);
  double firm_side = 0.0;   // matched pairs the firm finds unacceptable
  double worker_side = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = matching.worker_partner(i);
    if (j == m) continue;
    firm_side += std::max(-pv.q.at(j, i), 0.0);
    worker_side += std::max(-pv.p.at(i, j), 0.0);
  }
  return firm_side / (2.0 * n) + worker_side / (2.0 * m);
}

bool irv_within_half(const MatchingMatrix& matching, const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  // irv = A/(2 n^2) + B/(2 m^2) with integer numerators A (firm side, values
  // counted in units of 1/n) and B (worker side, units of 1/m);
  // irv <= 1/2  <=>  A m^2 + B n^2 <= n^2 m^2.
  std::int64_t a = 0, b = 0;
  for (int i = 0; i < n; ++i) {
    const int j = matching.worker_partner(i);
    if (j == m) continue;
    a += std::max(-preference_count(profile.firms[static_cast<std::size_t>(j)], i), 0);
    b += std::max(-preference_count(profile.workers[static_cast<std::size_t>(i)], j), 0);
  }
  const std::int64_t n2 = static_cast<std::int64_t>(n) * n;
  const std::int64_t m2 = static_cast<std::int64_t>(m) * m;
  return a * m2 + b * n2 <= n2 * m2;
}

std::vector<Ranking> optimal_rankings(const PreferenceProfile& profile,
                                      const MatchingMatrix& example) {
  const int n = profile.n();
  const int m = profile.m();
  if (n + m > 8) throw std::invalid_argument("optimal_rankings: too many agents for brute force");
  std::vector<int> order(static_cast<std::size_t>(n + m));
  std::iota(order.begin(), order.end(), 0);
  std::vector<Ranking> best;
  int best_distance = -1;
  do {
    const Ranking r{order};
    const int d = hamming_raw(run_sd(profile, r), example);
    if (best_distance < 0 || d < best_distance) {
      best_distance = d;
      best.clear();
    }
    if (d == best_distance) best.push_back(r);
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

bool ranking_in_set(const Ranking& r, const std::vector<Ranking>& set) {
  return std::find(set.begin(), set.end(), r) != set.end();
}

WilcoxonResult wilcoxon_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: length mismatch");
  std::vector<double> diffs;
  diffs.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw std::domain_error("wilcoxon: all differences are zero");
  const int n = static_cast<int>(diffs.size());

  std::vector<int> idx(diffs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int x, int y) {
    return std::fabs(diffs[static_cast<std::size_t>(x)]) < std::fabs(diffs[static_cast<std::size_t>(y)]);
  });
  // mid-ranks over tied magnitudes
  std::vector<double> rank(diffs.size(), 0.0);
  std::vector<int> tie_sizes;
  for (std::size_t s = 0; s < idx.size();) {
    std::size_t e = s;
    const double mag = std::fabs(diffs[static_cast<std::size_t>(idx[s])]);
    while (e < idx.size() && std::fabs(diffs[static_cast<std::size_t>(idx[e])]) == mag) ++e;
    const double mid = (static_cast<double>(s + 1) + static_cast<double>(e)) / 2.0;
    for (std::size_t t = s; t < e; ++t) rank[static_cast<std::size_t>(idx[t])] = mid;
    tie_sizes.push_back(static_cast<int>(e - s));
    s = e;
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if (diffs[i] > 0.0) w_plus += rank[i];
  }

  WilcoxonResult res;
  res.w_plus = w_plus;
  res.n_used = n;
  if (n < 20) {
    // Exact conditional distribution over all sign assignments of the
    // observed ranks.
    res.exact = true;
    const std::uint64_t patterns = 1ULL << n;
    std::uint64_t count = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      double w = 0.0;
      for (int i = 0; i < n; ++i) {
        if (mask & (1ULL << i)) w += rank[static_cast<std::size_t>(i)];
      }
      if (w <= w_plus + 1e-9) ++count;
    }
    res.p = static_cast<double>(count) / static_cast<double>(patterns);
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (int t : tie_sizes) {
      const double td = t;
      var -= (td * td * td - td) / 48.0;
    }
    const double z = (w_plus - mu + 0.5) / std::sqrt(var);
    res.p = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  }
  return res;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / (static_cast<double>(xs.size()) - 1.0));
}

}  // namespace matchkit

#include "matchkit/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace matchkit {

MatchingMatrix deferred_acceptance(const PreferenceProfile& profile) {
  const int n = profile.n();
  const int m = profile.m();
  // next_proposal[i]: next rank worker i will propose at.
  std::vector<int> next_proposal(static_cast<std::size_t>(n), 1);
  std::vector<int> held_by(static_cast<std::size_t>(m), -1);  // proposer a firm holds
  std::queue<int> free_workers;
  for (int i = 0; i < n; ++i) free_workers.push(i);

  while (!free_workers.empty()) {
    const int i = free_workers.front();
    free_workers.pop();
    const LinearOrder& wp = profile.workers[static_cast<std::size_t>(i)];
    while (next_proposal[static_cast<std::size_t>(i)] <= wp.num_options()) {
      const int rank = next_proposal[static_cast<std::size_t>(i)]++;
      const int opt = wp.option_at(rank);
      if (opt == wp.unmatch_option()) break;  // prefers staying single from here on
      const LinearOrder& fp = profile.firms[static_cast<std::size_t>(opt)];
      if (!fp.prefers(i, fp.unmatch_option())) continue;  // unacceptable proposer
      const int held = held_by[static_cast<std::size_t>(opt)];
      if (held == -1) {
        held_by[static_cast<std::size_t>(opt)] = i;
        break;
      }
      if (fp.prefers(i, held)) {
        held_by[static_cast<std::size_t>(opt)] = i;
        free_workers.push(held);
        break;
      }
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < m; ++j) {
    if (held_by[static_cast<std::size_t>(j)] != -1) pairs.emplace_back(held_by[static_cast<std::size_t>(j)], j);
  }
  return MatchingMatrix::from_pairs(n, m, pairs);
}

RewardSpec RewardSpec::mh(std::vector<int> selected_workers) {
  RewardSpec s;
  s.kind = Kind::MH;
  s.selected = std::move(selected_workers);
  std::sort(s.selected.begin(), s.selected.end());
  return s;
}

double RewardSpec::alpha(int worker) const {
  if (kind == Kind::EH) return 1.0;
  return std::binary_search(selected.begin(), selected.end(), worker) ? 2.0 : 1.0;
}

double reward(int i, int j, const PreferenceProfile& profile, const RewardSpec& spec) {
  const int n = profile.n();
  const int m = profile.m();
  if (i < 0 || i > n || j < 0 || j > m) throw std::out_of_range("reward: index out of range");
  if (i == n && j == m) throw std::out_of_range("reward: both sides unmatched");
  double total = 0.0;
  if (i < n) {
    const LinearOrder& wp = profile.workers[static_cast<std::size_t>(i)];
    total += spec.alpha(i) * static_cast<double>(m + 2 - wp.ord(j));
  }
  if (j < m) {
    const LinearOrder& fp = profile.firms[static_cast<std::size_t>(j)];
    total += static_cast<double>(n + 2 - fp.ord(i));
  }
  return total;
}

double matching_reward(const MatchingMatrix& matching, const PreferenceProfile& profile,
                       const RewardSpec& spec) {
  const int n = profile.n();
  const int m = profile.m();
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += reward(i, matching.worker_partner(i), profile, spec);
  for (int j = 0; j < m; ++j) {
    if (matching.firm_partner(j) == n) total += reward(n, j, profile, spec);
  }
  return total;
}

std::vector<int> hungarian_max_assignment(const Mat& rewards) {
  const int k = rewards.rows;
  if (rewards.cols != k || k == 0) {
    throw std::invalid_argument("hungarian_max_assignment: matrix must be square");
  }
  for (double v : rewards.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian_max_assignment: non-finite reward");
  }
  // Shortest-augmenting-path assignment on cost = -reward, 1-based with a
  // virtual row/column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(k) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(k) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(k) + 1, 0);    // column -> row
  std::vector<int> way(static_cast<std::size_t>(k) + 1, 0);
  const auto cost = [&](int i, int j) { return -rewards.at(i - 1, j - 1); };

  for (int i = 1; i <= k; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(k) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(k) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= k; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(k), -1);
  for (int j = 1; j <= k; ++j) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

MatchingMatrix hungarian_matching(const PreferenceProfile& profile, const RewardSpec& spec) {
  const int n = profile.n();
  const int m = profile.m();
  constexpr double kForbidden = -1e12;
  // Rows: workers 0..n-1, then firm unmatch slots n..n+m-1.
  // Columns: firms 0..m-1, then worker unmatch slots m..m+n-1.
  Mat table(n + m, n + m, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) table.at(i, j) = reward(i, j, profile, spec);
    for (int i2 = 0; i2 < n; ++i2) {
      table.at(i, m + i2) = i2 == i ? reward(i, m, profile, spec) : kForbidden;
    }
  }
  for (int j2 = 0; j2 < m; ++j2) {
    for (int j = 0; j < m; ++j) {
      table.at(n + j2, j) = j == j2 ? reward(n, j, profile, spec) : kForbidden;
    }
    // firm dummy x worker dummy: allowed filler at zero reward
  }
  const std::vector<int> assignment = hungarian_max_assignment(table);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    if (assignment[static_cast<std::size_t>(i)] < m) pairs.emplace_back(i, assignment[static_cast<std::size_t>(i)]);
  }
  return MatchingMatrix::from_pairs(n, m, pairs);
}

MatchingMatrix rsd(const PreferenceProfile& profile, Rng& rng) {
  return run_sd(profile, Ranking{rng.permutation(profile.n() + profile.m())});
}

}  // namespace matchkit

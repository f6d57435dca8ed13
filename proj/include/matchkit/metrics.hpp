#pragma once

#include <span>
#include <vector>

#include "matchkit/dense.hpp"
#include "matchkit/matching.hpp"

namespace matchkit {

// Hamming distance between two matching matrices, normalized by 3n (n = m).
double hamming_distance(const Mat& a, const Mat& b);
int hamming_raw(const MatchingMatrix& a, const MatchingMatrix& b);

// |blocking pairs| / n^2 (n = m).
double num_blocking_pairs(const MatchingMatrix& matching, const PreferenceProfile& profile);

// Cardinal encodings of the reports, centered so the unmatch option is worth
// exactly 0: p[i][j] is worker i's value for firm j, q[j][i] firm j's value
// for worker i; entries lie in [-1, 1].
struct PreferenceVectors {
  Mat p;  // n x m
  Mat q;  // m x n
};

PreferenceVectors preference_vectors(const PreferenceProfile& profile);

// Stability violation as defined over the real-pair block (sum of products of
// truncated preference gains), including the 1/n prefactor. Accepts soft
// matrices during training. n = m.
double stv_raw(const Mat& matching, const PreferenceProfile& profile);
// Reported SV metric: stv_raw further normalized by n.
double stability_violation(const Mat& matching, const PreferenceProfile& profile);

// IR violation in [0, 1]; zero iff the matching is IR. n = m.
double ir_violation(const MatchingMatrix& matching, const PreferenceProfile& profile);
// General-shape variant used for the <= 1/2 bound: firm-side sum over 2n,
// worker-side sum over 2m.
double ir_violation_general(const MatchingMatrix& matching, const PreferenceProfile& profile);
// Exact integer-arithmetic verdict for ir_violation_general <= 1/2.
bool irv_within_half(const MatchingMatrix& matching, const PreferenceProfile& profile);

// All rankings minimizing the raw Hamming distance of SD's outcome to the
// example matching. Exhaustive over (n+m)! rankings; refuses n+m > 8.
std::vector<Ranking> optimal_rankings(const PreferenceProfile& profile,
                                      const MatchingMatrix& example);
bool ranking_in_set(const Ranking& r, const std::vector<Ranking>& set);

struct WilcoxonResult {
  double p = 1.0;
  double w_plus = 0.0;  // rank sum of positive differences
  int n_used = 0;
  bool exact = false;
};

// One-sided Wilcoxon signed-rank test of H1: a < b (paired). Zero differences
// are discarded; tied magnitudes receive mid-ranks. Exact enumeration below
// 20 usable pairs, continuity-corrected normal approximation otherwise.
// Throws std::domain_error when every difference is zero.
WilcoxonResult wilcoxon_one_sided(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> xs);
double sample_std(std::span<const double> xs);

}  // namespace matchkit

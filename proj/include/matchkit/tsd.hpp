#pragma once

#include <string>
#include <vector>

#include "matchkit/dense.hpp"
#include "matchkit/matching.hpp"
#include "matchkit/tensor.hpp"

namespace matchkit {

// Stacked per-agent preference matrices: worker i's matrix is (m+1)x(m+1)
// with a 1 at (option j, rank of j); firms symmetric with (n+1)x(n+1).
struct PreferenceTensorData {
  int n = 0;
  int m = 0;
  std::vector<double> worker;  // n * (m+1) * (m+1), row-major per matrix
  std::vector<double> firm;    // m * (n+1) * (n+1)
};

PreferenceTensorData build_preference_tensor(const PreferenceProfile& profile);

// Ranking matrix R: rows index agents (workers then firms), columns index
// ranks; R[a][k] = 1 iff agent a holds rank k.
Mat build_ranking_matrix(const Ranking& ranking, int n, int m);

// Recovers the ranking from a hard ranking matrix (argmax per column).
Ranking ranking_from_matrix(const Mat& r, int n, int m);

// colsum -> cumsum -> triangle_window -> P * c. For an admissible binary P
// this selects the leftmost column containing a 1 (zero vector if P is zero).
ad::Tensor find_counterpart(ad::Tape& tape, ad::Tensor p);

struct RankingMasks {
  std::vector<ad::Tensor> worker;  // per rank k: (m+1)x(m+1)
  std::vector<ad::Tensor> firm;    // per rank k: (n+1)x(n+1)
};

// Masks that zero the option-row of the agent holding rank k; linear in R so
// gradients flow through them when R is soft.
RankingMasks create_ranking_masks(ad::Tape& tape, ad::Tensor r, int n, int m);

// Tensor serial dictatorship: exact tensor-operation replay of SD for a hard
// ranking matrix, executed literally on soft inputs. Input stacks are never
// mutated; every step lands on the tape.
ad::Tensor tsd(ad::Tape& tape, ad::Tensor pw, ad::Tensor pf, ad::Tensor r, int n, int m);

// Forward-only TSD on raw buffers (identical arithmetic, reused storage).
Mat tsd_forward(const PreferenceTensorData& prefs, const Mat& r);

struct InvariantReport {
  bool ok = true;
  std::string violation;
  int iteration = -1;
};

// Replays TSD on a hard ranking and checks, after each of the first `upto_k`
// iterations, the loop invariants: (A)/(B) admissible per-agent matrices,
// (C) zero matrix iff passively matched, (D) matched agents' rows zeroed and
// all other rows untouched, (E) accumulated M equals the partial SD result.
InvariantReport tsd_loop_invariant_probe(const PreferenceProfile& profile,
                                         const Ranking& ranking, int upto_k);

}  // namespace matchkit

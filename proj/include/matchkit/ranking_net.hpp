#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "matchkit/matching.hpp"
#include "matchkit/tensor.hpp"

namespace matchkit {

// Parameters of the ranking block. Independent of the number of agents, so a
// trained block evaluates at any scale.
struct RankingParams {
  int d = 10;
  int d_emb = 10;
  double tau = 0.1;
  std::vector<double> wq;  // d x d_emb, row-major
  std::vector<double> wk;
  std::vector<double> wv;
  std::vector<double> w;  // d_emb
  double b = 0.0;

  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per matrix, b = 0.
  static RankingParams init(int d, int d_emb, double tau, std::uint64_t seed);

  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  int num_params() const { return 3 * d * d_emb + d_emb + 1; }
};

// Parameter leaves placed on a tape for one forward pass.
struct RankingParamTensors {
  ad::Tensor wq, wk, wv, w, b;
};

RankingParamTensors make_param_tensors(ad::Tape& tape, const RankingParams& params,
                                       bool requires_grad);

// rank(a)_i = #{j : a_j < a_i, or a_j = a_i and j < i}. Detached from the
// gradient, mirroring the tie-break footnote.
std::vector<double> rank_vector(std::span<const double> a);

// Scaled dot-product self-attention: softmax(QK^T / sqrt(d_emb)) V.
ad::Tensor self_attention(ad::Tape& tape, ad::Tensor x, const RankingParamTensors& params);

// a + rank(a), with the rank term treated as a constant.
ad::Tensor tie_break(ad::Tape& tape, ad::Tensor a);

// softmax(-|sort(a)^T 1 - 1^T a| / tau) with a decreasing sort; row k is the
// soft indicator of the agent holding rank k.
ad::Tensor soft_sort(ad::Tape& tape, ad::Tensor a, double tau);

// Post-tie-break scores for the concatenated contexts [X_W; X_F].
ad::Tensor ranking_scores(ad::Tape& tape, ad::Tensor x, const RankingParamTensors& params);

// SoftSort_tau . TieBreak . Linear . SelfAttn over [X_W; X_F]; rows are
// row-stochastic and indexed by rank.
ad::Tensor ranking_block(ad::Tape& tape, ad::Tensor x, const RankingParamTensors& params,
                         double tau);

// Places the concatenated instance contexts on the tape as a constant.
ad::Tensor contexts_tensor(ad::Tape& tape, const Instance& instance);

// Exact argsort (decreasing) of the tie-broken scores; the tau -> 0 limit of
// the soft block and the ranking used at inference.
Ranking hard_ranking(const Instance& instance, const RankingParams& params);

}  // namespace matchkit

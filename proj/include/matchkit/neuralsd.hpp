#pragma once

#include "matchkit/matching.hpp"
#include "matchkit/metrics.hpp"
#include "matchkit/ranking_net.hpp"
#include "matchkit/tensor.hpp"
#include "matchkit/tsd.hpp"

namespace matchkit {

struct ForwardTrainResult {
  ad::Tensor soft_matching;  // (n+1) x (m+1)
  ad::Tensor soft_ranking;   // SoftSort output, rows indexed by rank
};

// Training-mode forward pass: preference tensors, soft ranking from contexts,
// TSD; everything on the tape. The SoftSort output indexes rows by rank, so
// it is transposed into the agent-rows/rank-columns convention before TSD.
ForwardTrainResult forward_train(ad::Tape& tape, const PreferenceProfile& profile,
                                 const Instance& instance, const RankingParamTensors& params,
                                 double tau);

// Deployed mechanism: exact argsort ranking from contexts, then discrete SD.
MatchingMatrix forward_infer(const PreferenceProfile& profile, const Instance& instance,
                             const RankingParams& params);

// Average row-wise cross entropy between softmax(M_hat rows) and the target,
// over the worker rows only (the unmatch row is excluded).
ad::Tensor matching_loss(ad::Tape& tape, ad::Tensor m_hat, const MatchingMatrix& target);

// Stability violation of a soft matching, on the tape (training regularizer).
ad::Tensor stability_violation_soft(ad::Tape& tape, ad::Tensor m_hat,
                                    const PreferenceVectors& pv);

// matching_loss + (lambda / dataset_size) * stv(M_hat).
ad::Tensor loss_with_stability_reg(ad::Tape& tape, ad::Tensor m_hat, const MatchingMatrix& target,
                                   const PreferenceVectors& pv, double lambda, int dataset_size);

}  // namespace matchkit

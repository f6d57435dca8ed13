#include "matchkit/neuralsd.hpp"

#include <stdexcept>
#include <vector>

namespace matchkit {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

ForwardTrainResult forward_train(Tape& tape, const PreferenceProfile& profile,
                                 const Instance& instance, const RankingParamTensors& params,
                                 double tau) {
  const int n = profile.n();
  const int m = profile.m();
  if (instance.n != n || instance.m != m) {
    throw std::invalid_argument("forward_train: instance/profile dimension mismatch");
  }
  const PreferenceTensorData prefs = build_preference_tensor(profile);
  const Tensor pw = tape.constant(Shape::stack(n, m + 1, m + 1), prefs.worker);
  const Tensor pf = tape.constant(Shape::stack(m, n + 1, n + 1), prefs.firm);
  const Tensor soft = ranking_block(tape, contexts_tensor(tape, instance), params, tau);
  // SoftSort rows select the agent per rank; TSD reads ranks off columns.
  const Tensor r = tape.transpose(soft);
  return ForwardTrainResult{tsd(tape, pw, pf, r, n, m), soft};
}

MatchingMatrix forward_infer(const PreferenceProfile& profile, const Instance& instance,
                             const RankingParams& params) {
  if (instance.n != profile.n() || instance.m != profile.m()) {
    throw std::invalid_argument("forward_infer: instance/profile dimension mismatch");
  }
  return run_sd(profile, hard_ranking(instance, params));
}

Tensor matching_loss(Tape& tape, Tensor m_hat, const MatchingMatrix& target) {
  const int n = target.n();
  const int m = target.m();
  if (m_hat.shape() != Shape::mat(n + 1, m + 1)) {
    throw std::invalid_argument("matching_loss: shape mismatch");
  }
  std::vector<double> target_rows(static_cast<std::size_t>(n) * (m + 1), 0.0);
  for (int i = 0; i < n; ++i) {
    target_rows[static_cast<std::size_t>(i) * (m + 1) + target.worker_partner(i)] = 1.0;
  }
  const Tensor worker_rows = tape.rows(m_hat, 0, n);
  const Tensor probs = tape.softmax_rows(worker_rows);
  const Tensor picked = tape.elementwise_mul(
      tape.log(probs), tape.constant(Shape::mat(n, m + 1), std::move(target_rows)));
  return tape.scale(tape.sum(picked), -1.0 / n);
}

Tensor stability_violation_soft(Tape& tape, Tensor m_hat, const PreferenceVectors& pv) {
  const int n = pv.p.rows;
  if (pv.p.cols != n || pv.q.rows != n || pv.q.cols != n) {
    throw std::invalid_argument("stability_violation_soft: requires n = m");
  }
  if (m_hat.shape() != Shape::mat(n + 1, n + 1)) {
    throw std::invalid_argument("stability_violation_soft: shape mismatch");
  }
  // firm_gain[i][j] = sum_{i2} relu(q[j][i] - q[j][i2]) * M[i2][j]
  // worker_gain[i][j] = sum_{j2} relu(p[i][j] - p[i][j2]) * M[i][j2]
  std::vector<Tensor> firm_cols, worker_rows;
  firm_cols.reserve(static_cast<std::size_t>(n));
  worker_rows.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    Mat gaps(n, n, 0.0);  // gaps[i][i2] = max(q[j][i] - q[j][i2], 0)
    for (int i = 0; i < n; ++i) {
      for (int i2 = 0; i2 < n; ++i2) gaps.at(i, i2) = std::max(pv.q.at(j, i) - pv.q.at(j, i2), 0.0);
    }
    const Tensor col = tape.col_segment(m_hat, j, 0, n);
    firm_cols.push_back(tape.matvec(tape.constant(Shape::mat(n, n), gaps.data), col));
  }
  for (int i = 0; i < n; ++i) {
    Mat gaps(n, n, 0.0);  // gaps[j][j2] = max(p[i][j] - p[i][j2], 0)
    for (int j = 0; j < n; ++j) {
      for (int j2 = 0; j2 < n; ++j2) gaps.at(j, j2) = std::max(pv.p.at(i, j) - pv.p.at(i, j2), 0.0);
    }
    const Tensor mrow = tape.slice(tape.row(m_hat, i), 0, n);
    worker_rows.push_back(tape.matvec(tape.constant(Shape::mat(n, n), gaps.data), mrow));
  }
  // firm_cols[j][i] pairs with worker_rows[i][j]: stack as matrices and sum.
  const Tensor firm_gain_t = tape.stack_rows(firm_cols);     // [j][i]
  const Tensor worker_gain = tape.stack_rows(worker_rows);   // [i][j]
  const Tensor prod = tape.elementwise_mul(tape.transpose(firm_gain_t), worker_gain);
  return tape.scale(tape.sum(prod), 1.0 / n);
}

Tensor loss_with_stability_reg(Tape& tape, Tensor m_hat, const MatchingMatrix& target,
                               const PreferenceVectors& pv, double lambda, int dataset_size) {
  if (lambda < 0.0 || dataset_size < 1) {
    throw std::invalid_argument("loss_with_stability_reg: bad lambda or dataset size");
  }
  const Tensor base = matching_loss(tape, m_hat, target);
  if (lambda == 0.0) return base;
  const Tensor reg = stability_violation_soft(tape, m_hat, pv);
  return tape.add(base, tape.scale(reg, lambda / dataset_size));
}

}  // namespace matchkit

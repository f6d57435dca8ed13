#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "matchkit/datagen.hpp"
#include "matchkit/neuralsd.hpp"
#include "matchkit/rng.hpp"

using namespace matchkit;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

namespace {

LinearOrder order_from(const std::vector<int>& best_to_worst) {
  return LinearOrder::from_best_to_worst(best_to_worst);
}

Instance random_instance(int n, int m, Rng& rng) {
  auto [xw, xf] = sample_contexts(n, m, 10, rng);
  return Instance(std::move(xw), std::move(xf));
}

}  // namespace

TEST_CASE("loss of an exact 1x1 hard match is ln(1 + e^-1)") {
  const MatchingMatrix target = MatchingMatrix::from_pairs(1, 1, {{0, 0}});
  Tape tape(false);
  const Tensor m_hat = tape.constant(Shape::mat(2, 2), {1, 0, 0, 0});
  const double loss = matching_loss(tape, m_hat, target).scalar_value();
  CHECK(loss == doctest::Approx(0.31326168751822286).epsilon(1e-10));
}

TEST_CASE("confident logits drive the loss toward zero") {
  const MatchingMatrix target = MatchingMatrix::from_pairs(1, 1, {{0, 0}});
  Tape tape(false);
  const Tensor m_hat = tape.constant(Shape::mat(2, 2), {10, -10, 0, 0});
  const double loss = matching_loss(tape, m_hat, target).scalar_value();
  CHECK(loss == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
  CHECK(loss < 1e-8);
}

TEST_CASE("loss is invariant to jointly permuting worker rows") {
  Rng rng(81);
  const int n = 3;
  Mat soft(n + 1, n + 1);
  for (double& v : soft.data) v = rng.uniform();
  const MatchingMatrix target = MatchingMatrix::from_pairs(n, n, {{0, 1}, {1, 2}, {2, 0}});

  Tape t1(false);
  const double base = matching_loss(t1, t1.constant(Shape::mat(n + 1, n + 1), soft.data), target)
                          .scalar_value();

  // permute workers (rows) of both prediction and target by (1, 2, 0)
  const std::vector<int> perm{1, 2, 0};
  Mat permuted = soft;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= n; ++j) permuted.at(i, j) = soft.at(perm[static_cast<std::size_t>(i)], j);
  }
  const MatchingMatrix permuted_target =
      MatchingMatrix::from_pairs(n, n, {{0, 2}, {1, 0}, {2, 1}});
  Tape t2(false);
  const double moved =
      matching_loss(t2, t2.constant(Shape::mat(n + 1, n + 1), permuted.data), permuted_target)
          .scalar_value();
  CHECK(base == doctest::Approx(moved).epsilon(1e-12));
}

TEST_CASE("stability regularizer: lambda 0 equals the plain loss, stable target term vanishes") {
  Rng rng(82);
  const int n = 3;
  const PreferenceProfile profile = random_profile(n, n, rng);
  const PreferenceVectors pv = preference_vectors(profile);
  const MatchingMatrix stable = deferred_acceptance(profile);

  Tape tape(false);
  const Tensor m_hat = tape.constant(Shape::mat(n + 1, n + 1), stable.to_mat().data);
  const double plain = matching_loss(tape, m_hat, stable).scalar_value();
  const double reg0 = loss_with_stability_reg(tape, m_hat, stable, pv, 0.0, 100).scalar_value();
  CHECK(plain == reg0);
  CHECK(stability_violation_soft(tape, m_hat, pv).scalar_value() == 0.0);

  const double reg = loss_with_stability_reg(tape, m_hat, stable, pv, 0.1, 100).scalar_value();
  CHECK(reg == plain);  // stable target: zero violation term
}

TEST_CASE("soft stability regularizer matches the metric on soft matrices") {
  Rng rng(83);
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_below(3));
    const PreferenceProfile profile = random_profile(n, n, rng);
    const PreferenceVectors pv = preference_vectors(profile);
    Mat soft(n + 1, n + 1);
    for (double& v : soft.data) v = rng.uniform();
    Tape tape(false);
    const double on_tape =
        stability_violation_soft(tape, tape.constant(Shape::mat(n + 1, n + 1), soft.data), pv)
            .scalar_value();
    CHECK(on_tape == doctest::Approx(stv_raw(soft, profile)).epsilon(1e-12));
  }
}

TEST_CASE("lambda/L weighting enters as stated") {
  Rng rng(84);
  const int n = 2;
  const PreferenceProfile profile = random_profile(n, n, rng);
  const PreferenceVectors pv = preference_vectors(profile);
  const MatchingMatrix target = MatchingMatrix::from_pairs(n, n, {{0, 0}, {1, 1}});
  Mat soft(n + 1, n + 1);
  for (double& v : soft.data) v = rng.uniform();
  Tape tape(false);
  const Tensor m_hat = tape.constant(Shape::mat(n + 1, n + 1), soft.data);
  const double base = matching_loss(tape, m_hat, target).scalar_value();
  const double sv = stability_violation_soft(tape, m_hat, pv).scalar_value();
  const double total = loss_with_stability_reg(tape, m_hat, target, pv, 0.1, 50).scalar_value();
  CHECK(total == doctest::Approx(base + 0.1 / 50.0 * sv).epsilon(1e-12));
}

TEST_CASE("training forward at tiny temperature matches hard inference") {
  Rng rng(85);
  for (int t = 0; t < 15; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(4));
    const int m = 1 + static_cast<int>(rng.uniform_below(4));
    const Instance inst = random_instance(n, m, rng);
    const PreferenceProfile profile = random_profile(n, m, rng);
    const RankingParams params = RankingParams::init(10, 10, 1e-4, rng.next_u64());

    Tape tape(false);
    const RankingParamTensors pt = make_param_tensors(tape, params, false);
    const ForwardTrainResult fwd = forward_train(tape, profile, inst, pt, 1e-4);
    const Mat hard = forward_infer(profile, inst, params).to_mat();
    for (std::size_t e = 0; e < hard.data.size(); ++e) {
      CHECK(std::fabs(fwd.soft_matching.value()[e] - hard.data[e]) < 1e-6);
    }
  }
}

TEST_CASE("1x1 mutual acceptance is matched almost surely regardless of parameters") {
  Rng rng(86);
  PreferenceProfile p;
  p.workers = {order_from({0, 1})};
  p.firms = {order_from({0, 1})};
  for (double tau : {1e-4, 0.1}) {
    for (int t = 0; t < 10; ++t) {
      const Instance inst = random_instance(1, 1, rng);
      const RankingParams params = RankingParams::init(10, 10, tau, rng.next_u64());
      Tape tape(false);
      const RankingParamTensors pt = make_param_tensors(tape, params, false);
      const ForwardTrainResult fwd = forward_train(tape, p, inst, pt, tau);
      CHECK(fwd.soft_matching.value()[0] == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
}

TEST_CASE("the pipeline is not gradient-dead at tau = 0.1") {
  Rng rng(87);
  const Instance inst = random_instance(3, 3, rng);
  const PreferenceProfile profile = random_profile(3, 3, rng);
  const RankingParams params = RankingParams::init(10, 10, 0.1, 29);
  const MatchingMatrix target = deferred_acceptance(profile);

  Tape tape(true);
  const RankingParamTensors pt = make_param_tensors(tape, params, true);
  const ForwardTrainResult fwd = forward_train(tape, profile, inst, pt, 0.1);
  tape.backward(matching_loss(tape, fwd.soft_matching, target));
  double norm = 0.0;
  for (double g : pt.wq.grad()) norm += std::fabs(g);
  CHECK(norm > 0.0);
}

TEST_CASE("forward_infer is SP and Pareto efficient on spot checks") {
  Rng rng(88);
  for (int t = 0; t < 3; ++t) {
    const Instance inst = random_instance(3, 3, rng);
    const PreferenceProfile profile = random_profile(3, 3, rng);
    const RankingParams params = RankingParams::init(10, 10, 0.1, rng.next_u64());
    const Mechanism mech = [&params](const Instance& i, const PreferenceProfile& prof) {
      return forward_infer(prof, i, params);
    };
    CHECK(check_strategy_proofness(mech, inst, profile).empty());
    CHECK(is_pareto_efficient(forward_infer(profile, inst, params), profile));
    CHECK(irv_within_half(forward_infer(profile, inst, params), profile));
  }
}

TEST_CASE("full training-loss gradient passes the finite-difference oracle") {
  Rng rng(89);
  const int d = 3, d_emb = 3;
  const Instance inst([&] {
    Mat xw(3, d), xf(3, d);
    for (double& v : xw.data) v = rng.normal(1.0, 1.0);
    for (double& v : xf.data) v = rng.normal(-1.0, 1.0);
    return Instance(xw, xf);
  }());
  const PreferenceProfile profile = random_profile(3, 3, rng);
  const MatchingMatrix target = deferred_acceptance(profile);
  const RankingParams base = RankingParams::init(d, d_emb, 0.1, 31);

  const auto f = [&](Tape& tape, Tensor theta) {
    const int mat = d * d_emb;
    std::vector<Tensor> rows_q, rows_k, rows_v;
    for (int r = 0; r < d; ++r) {
      rows_q.push_back(tape.slice(theta, r * d_emb, (r + 1) * d_emb));
      rows_k.push_back(tape.slice(theta, mat + r * d_emb, mat + (r + 1) * d_emb));
      rows_v.push_back(tape.slice(theta, 2 * mat + r * d_emb, 2 * mat + (r + 1) * d_emb));
    }
    const RankingParamTensors pt{tape.stack_rows(rows_q), tape.stack_rows(rows_k),
                                 tape.stack_rows(rows_v),
                                 tape.slice(theta, 3 * mat, 3 * mat + d_emb),
                                 tape.sum(tape.slice(theta, 3 * mat + d_emb, 3 * mat + d_emb + 1))};
    const ForwardTrainResult fwd = forward_train(tape, profile, inst, pt, 0.1);
    return matching_loss(tape, fwd.soft_matching, target);
  };
  CHECK(ad::grad_check(f, Shape::vec(base.num_params()), base.flatten(), 1e-5) < 1e-4);
}

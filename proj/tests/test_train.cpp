#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "matchkit/neuralsd.hpp"
#include "matchkit/train.hpp"

using namespace matchkit;

TEST_CASE("gradient clipping") {
  std::vector<double> light{1.0, -2.0, 2.0};  // L1 = 5
  clip_grad_l1(light, 10.0);
  CHECK(light == std::vector<double>{1.0, -2.0, 2.0});

  std::vector<double> heavy{10.0, -6.0, 4.0};  // L1 = 20
  clip_grad_l1(heavy, 10.0);
  CHECK(heavy == std::vector<double>{5.0, -3.0, 2.0});

  double l1 = 0.0;
  for (double g : heavy) l1 += std::fabs(g);
  CHECK(l1 <= 10.0 + 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<double> params{0.3, -0.7};
  const std::vector<double> zero{0.0, 0.0};
  AdamState state;
  for (int t = 0; t < 5; ++t) adam_step(params, zero, state, 1e-2, 0.9, 0.999, 1e-8);
  CHECK(params == std::vector<double>{0.3, -0.7});
}

TEST_CASE("adam: constant gradient converges to lr-sized steps") {
  std::vector<double> params{0.0};
  const std::vector<double> grad{0.37};
  AdamState state;
  double prev = params[0];
  double step = 0.0;
  for (int t = 0; t < 500; ++t) {
    adam_step(params, grad, state, 1e-3, 0.9, 0.999, 1e-8);
    step = prev - params[0];
    prev = params[0];
  }
  CHECK(step == doctest::Approx(1e-3).epsilon(0.02));
}

TEST_CASE("adam matches a long-double reference recurrence on a quadratic") {
  // minimize f(x, y) = x^2 + 3 y^2 from (1, -2); gradient (2x, 6y).
  std::vector<double> params{1.0, -2.0};
  AdamState state;
  long double m[2] = {0.0L, 0.0L}, v[2] = {0.0L, 0.0L};
  long double ref[2] = {1.0L, -2.0L};
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    const std::vector<double> grad{2.0 * params[0], 6.0 * params[1]};
    adam_step(params, grad, state, lr, b1, b2, eps);

    const long double g[2] = {2.0L * ref[0], 6.0L * ref[1]};
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1.0L - b1) * g[i];
      v[i] = b2 * v[i] + (1.0L - b2) * g[i] * g[i];
      const long double mh = m[i] / (1.0L - std::pow((long double)b1, t));
      const long double vh = v[i] / (1.0L - std::pow((long double)b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  CHECK(std::fabs(params[0] - static_cast<double>(ref[0])) < 1e-10);
  CHECK(std::fabs(params[1] - static_cast<double>(ref[1])) < 1e-10);
}

TEST_CASE("training is deterministic and thread-count independent") {
  const DatagenConfig dcfg{.n = 3, .m = 3, .count = 24, .mechanism = "da", .seed = 42, .t = 8.0, .d = 10};
  const Dataset ds = generate_dataset(dcfg);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.seed = 7;
  tcfg.threads = 1;
  const TrainResult a = train(ds, tcfg);
  tcfg.threads = 4;
  const TrainResult b = train(ds, tcfg);
  CHECK(checkpoint_to_string(a.checkpoint) == checkpoint_to_string(b.checkpoint));
  CHECK(a.epoch_loss == b.epoch_loss);
  for (double loss : a.epoch_loss) CHECK(std::isfinite(loss));
}

TEST_CASE("checkpoints round-trip losslessly") {
  const DatagenConfig dcfg{.n = 2, .m = 2, .count = 8, .mechanism = "da", .seed = 1, .t = 8.0, .d = 10};
  const Dataset ds = generate_dataset(dcfg);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  const TrainResult res = train(ds, tcfg);
  const std::string path = "train_test_ckpt.json";
  save_checkpoint(path, res.checkpoint);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.params.wq == res.checkpoint.params.wq);
  CHECK(loaded.params.wk == res.checkpoint.params.wk);
  CHECK(loaded.params.wv == res.checkpoint.params.wv);
  CHECK(loaded.params.w == res.checkpoint.params.w);
  CHECK(loaded.params.b == res.checkpoint.params.b);
  CHECK(loaded.config == res.checkpoint.config);
  // Bit-identical inference after reload.
  const DatasetRecord& rec = ds.records.front();
  CHECK(forward_infer(rec.profile, rec.instance, loaded.params) ==
        forward_infer(rec.profile, rec.instance, res.checkpoint.params));
  std::remove(path.c_str());
}

TEST_CASE("evaluate emits rows per record, model and metric") {
  const DatagenConfig dcfg{.n = 3, .m = 3, .count = 10, .mechanism = "da", .seed = 2, .t = 8.0, .d = 10};
  const Dataset ds = generate_dataset(dcfg);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  const TrainResult res = train(ds, tcfg);
  const EvalResult ev = evaluate(res.checkpoint, ds, 5);
  // 2 models x 4 DA metrics x 10 records
  CHECK(ev.rows.size() == 80);
  CHECK(ev.aggregates.at("neuralsd").at("hd").n == 10);
  CHECK(ev.aggregates.at("rsd").at("irv").n == 10);
  CHECK(ev.wilcoxon_p.count("hd") == 1);

  // Reward datasets emit hd + rw.
  const DatagenConfig ecfg{.n = 3, .m = 3, .count = 6, .mechanism = "eh", .seed = 3, .t = 8.0, .d = 10};
  const Dataset eds = generate_dataset(ecfg);
  const EvalResult ev2 = evaluate(res.checkpoint, eds, 5);
  CHECK(ev2.rows.size() == 24);
  for (const EvalRow& row : ev2.rows) {
    if (row.metric == "rw") CHECK(row.value <= 1.0 + 1e-12);
  }
}

TEST_CASE("a checkpoint trained at one scale evaluates at another") {
  const DatagenConfig small{.n = 3, .m = 3, .count = 8, .mechanism = "da", .seed = 4, .t = 8.0, .d = 10};
  TrainConfig tcfg;
  tcfg.epochs = 1;
  const TrainResult res = train(generate_dataset(small), tcfg);
  const DatagenConfig larger{.n = 5, .m = 5, .count = 6, .mechanism = "da", .seed = 5, .t = 8.0, .d = 10};
  const EvalResult ev = evaluate(res.checkpoint, generate_dataset(larger), 6);
  CHECK(ev.aggregates.at("neuralsd").at("hd").n == 6);
}

TEST_CASE("training rejects mixed-size datasets") {
  Dataset ds = generate_dataset({.n = 2, .m = 2, .count = 2, .mechanism = "da", .seed = 1, .t = 8.0, .d = 10});
  const Dataset other = generate_dataset({.n = 3, .m = 3, .count = 1, .mechanism = "da", .seed = 1, .t = 8.0, .d = 10});
  ds.records.push_back(other.records.front());
  TrainConfig tcfg;
  CHECK_THROWS_AS(train(ds, tcfg), std::invalid_argument);
}

TEST_CASE("recovery rate on a mechanism oracle is 1") {
  const DatagenConfig dcfg{.n = 3, .m = 3, .count = 12, .mechanism = "da", .seed = 8, .t = 8.0, .d = 10};
  const Dataset ds = generate_dataset(dcfg);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  const TrainResult res = train(ds, tcfg);
  const RecoveryResult rec = recovery_rate(res.checkpoint, ds, 9);
  CHECK(rec.optimal_set_size.size() == 12);
  for (int size : rec.optimal_set_size) {
    CHECK(size >= 1);
    CHECK(size <= 720);
  }
  CHECK(rec.neural_rate >= 0.0);
  CHECK(rec.neural_rate <= 1.0);
  // Every record's example came from DA; a ranking reproducing it exactly
  // need not exist, but the optimal set is never empty.
}

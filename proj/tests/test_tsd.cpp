#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "matchkit/rng.hpp"
#include "matchkit/tsd.hpp"

using namespace matchkit;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

namespace {

LinearOrder order_from(const std::vector<int>& best_to_worst) {
  return LinearOrder::from_best_to_worst(best_to_worst);
}

// Independent oracle: the leftmost column of P containing a nonzero entry,
// or the zero vector.
std::vector<double> leftmost_nonzero_column(const Mat& p) {
  for (int j = 0; j < p.cols; ++j) {
    bool nonzero = false;
    for (int i = 0; i < p.rows; ++i) nonzero = nonzero || p.at(i, j) != 0.0;
    if (nonzero) {
      std::vector<double> col(static_cast<std::size_t>(p.rows));
      for (int i = 0; i < p.rows; ++i) col[static_cast<std::size_t>(i)] = p.at(i, j);
      return col;
    }
  }
  return std::vector<double>(static_cast<std::size_t>(p.rows), 0.0);
}

std::vector<double> run_find_counterpart(const Mat& p) {
  Tape tape(false);
  const Tensor t = tape.constant(Shape::mat(p.rows, p.cols), p.data);
  return find_counterpart(tape, t).value();
}

// Enumerates all p x q binary matrices with at most one 1 per row and column.
void enumerate_admissible(int p, int q, const std::function<void(const Mat&)>& fn) {
  Mat current(p, q, 0.0);
  std::vector<bool> col_used(static_cast<std::size_t>(q), false);
  const std::function<void(int)> rec = [&](int row) {
    if (row == p) {
      fn(current);
      return;
    }
    rec(row + 1);  // all-zero row
    for (int j = 0; j < q; ++j) {
      if (col_used[static_cast<std::size_t>(j)]) continue;
      col_used[static_cast<std::size_t>(j)] = true;
      current.at(row, j) = 1.0;
      rec(row + 1);
      current.at(row, j) = 0.0;
      col_used[static_cast<std::size_t>(j)] = false;
    }
  };
  rec(0);
}

Mat tsd_on_tape(const PreferenceTensorData& prefs, const Mat& r) {
  Tape tape(true);
  const Tensor pw = tape.constant(Shape::stack(prefs.n, prefs.m + 1, prefs.m + 1), prefs.worker);
  const Tensor pf = tape.constant(Shape::stack(prefs.m, prefs.n + 1, prefs.n + 1), prefs.firm);
  const Tensor rt = tape.constant(Shape::mat(r.rows, r.cols), r.data);
  const Tensor out = tsd(tape, pw, pf, rt, prefs.n, prefs.m);
  Mat mat(prefs.n + 1, prefs.m + 1);
  mat.data = out.value();
  return mat;
}

}  // namespace

TEST_CASE("preference tensor matches the ord construction") {
  PreferenceProfile p;
  p.workers = {order_from({0, 1, 2})};  // f1 > f2 > u  -> identity
  p.firms = {order_from({0, 1}), order_from({1, 0})};
  const PreferenceTensorData prefs = build_preference_tensor(p);
  const std::vector<double> identity3{1, 0, 0, 0, 1, 0, 0, 0, 1};
  CHECK(std::vector<double>(prefs.worker.begin(), prefs.worker.begin() + 9) == identity3);

  PreferenceProfile q;
  q.workers = {order_from({2, 0, 1})};  // u > f1 > f2
  q.firms = {order_from({0, 1}), order_from({0, 1})};
  const PreferenceTensorData prefs2 = build_preference_tensor(q);
  // rows: f1 -> rank 2, f2 -> rank 3, u -> rank 1
  const std::vector<double> expected{0, 1, 0, 0, 0, 1, 1, 0, 0};
  CHECK(std::vector<double>(prefs2.worker.begin(), prefs2.worker.begin() + 9) == expected);
}

TEST_CASE("preference tensor stacks are permutation matrices") {
  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(5));
    const int m = 1 + static_cast<int>(rng.uniform_below(5));
    const PreferenceTensorData prefs = build_preference_tensor(random_profile(n, m, rng));
    const auto check_stack = [](const std::vector<double>& stack, int count, int size) {
      for (int c = 0; c < count; ++c) {
        for (int i = 0; i < size; ++i) {
          double row = 0.0, col = 0.0;
          for (int j = 0; j < size; ++j) {
            row += stack[static_cast<std::size_t>(c) * size * size + static_cast<std::size_t>(i) * size + j];
            col += stack[static_cast<std::size_t>(c) * size * size + static_cast<std::size_t>(j) * size + i];
          }
          CHECK(row == 1.0);
          CHECK(col == 1.0);
        }
      }
    };
    check_stack(prefs.worker, n, m + 1);
    check_stack(prefs.firm, m, n + 1);
  }
}

TEST_CASE("ranking matrix round trip") {
  const Ranking identity{{0, 1, 2, 3}};
  const Mat r = build_ranking_matrix(identity, 2, 2);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) CHECK(r.at(i, j) == (i == j ? 1.0 : 0.0));
  }

  // n = m = 1, ranking (f1, w1): agent 1 holds rank 0.
  const Mat r2 = build_ranking_matrix(Ranking{{1, 0}}, 1, 1);
  CHECK(r2.data == std::vector<double>{0, 1, 1, 0});

  Rng rng(42);
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(4));
    const int m = 1 + static_cast<int>(rng.uniform_below(4));
    const Ranking ranking{rng.permutation(n + m)};
    CHECK(ranking_from_matrix(build_ranking_matrix(ranking, n, m), n, m) == ranking);
  }
}

TEST_CASE("ranking masks") {
  SUBCASE("rank held by a worker leaves the worker mask zero") {
    Tape tape(false);
    const Mat r = build_ranking_matrix(Ranking{{0, 1}}, 1, 1);  // w1 first
    const Tensor rt = tape.constant(Shape::mat(2, 2), r.data);
    const RankingMasks masks = create_ranking_masks(tape, rt, 1, 1);
    CHECK(masks.worker[0].value() == std::vector<double>{0, 0, 0, 0});
    // U_F^(1): row 1 of the firm-side mask goes to -1.
    CHECK(masks.firm[0].value() == std::vector<double>{-1, -1, 0, 0});
  }
  SUBCASE("rank 1 held by f1 on a 1x1 instance") {
    Tape tape(false);
    const Mat r = build_ranking_matrix(Ranking{{1, 0}}, 1, 1);  // f1 first
    const Tensor rt = tape.constant(Shape::mat(2, 2), r.data);
    const RankingMasks masks = create_ranking_masks(tape, rt, 1, 1);
    CHECK(masks.worker[0].value() == std::vector<double>{-1, -1, 0, 0});
    CHECK(masks.firm[0].value() == std::vector<double>{0, 0, 0, 0});
  }
  SUBCASE("soft column splits the mask linearly") {
    Tape tape(false);
    const Tensor rt = tape.constant(Shape::mat(2, 2), {0.5, 0.0, 0.5, 0.0});
    const RankingMasks masks = create_ranking_masks(tape, rt, 1, 1);
    CHECK(masks.worker[0].value() == std::vector<double>{-0.5, -0.5, 0, 0});
  }
}

TEST_CASE("find_counterpart on the worked examples") {
  Mat zero(2, 3, 0.0);
  CHECK(run_find_counterpart(zero) == std::vector<double>{0, 0});

  Mat anti(2, 2, 0.0);
  anti.at(0, 1) = 1.0;
  anti.at(1, 0) = 1.0;
  CHECK(run_find_counterpart(anti) == std::vector<double>{0, 1});

  Mat right(2, 3, 0.0);
  right.at(0, 2) = 1.0;
  CHECK(run_find_counterpart(right) == std::vector<double>{1, 0});
}

TEST_CASE("find_counterpart matches the brute-force oracle exhaustively to 4x4") {
  int checked = 0;
  for (int p = 1; p <= 4; ++p) {
    for (int q = 1; q <= 4; ++q) {
      enumerate_admissible(p, q, [&](const Mat& mat) {
        ++checked;
        CHECK(run_find_counterpart(mat) == leftmost_nonzero_column(mat));
      });
    }
  }
  CHECK(checked == 490);
}

TEST_CASE("tsd equals run_sd on the hand-traced example") {
  PreferenceProfile p;
  p.workers = {order_from({0, 1, 2}), order_from({0, 2, 1})};
  p.firms = {order_from({1, 0, 2}), order_from({0, 2, 1})};
  const Ranking r{{0, 3, 1, 2}};
  const Mat got = tsd_forward(build_preference_tensor(p), build_ranking_matrix(r, 2, 2));
  Mat want(3, 3, 0.0);
  want.at(0, 0) = 1.0;  // (w1, f1)
  want.at(1, 2) = 1.0;  // w2 unmatched
  want.at(2, 1) = 1.0;  // f2 unmatched
  CHECK(got == want);
}

TEST_CASE("tsd 1x1 mutual acceptance under either ranking") {
  PreferenceProfile p;
  p.workers = {order_from({0, 1})};
  p.firms = {order_from({0, 1})};
  const PreferenceTensorData prefs = build_preference_tensor(p);
  for (const Ranking& r : {Ranking{{0, 1}}, Ranking{{1, 0}}}) {
    const Mat got = tsd_forward(prefs, build_ranking_matrix(r, 1, 1));
    CHECK(got.data == std::vector<double>{1, 0, 0, 0});
  }
}

TEST_CASE("tsd equals run_sd exactly on randomized instances") {
  Rng rng(43);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(6));
    const int m = 1 + static_cast<int>(rng.uniform_below(6));
    const PreferenceProfile profile = random_profile(n, m, rng);
    const Ranking ranking{rng.permutation(n + m)};
    const Mat got = tsd_forward(build_preference_tensor(profile),
                                build_ranking_matrix(ranking, n, m));
    REQUIRE(got == run_sd(profile, ranking).to_mat());
  }
}

TEST_CASE("tape tsd and raw tsd agree on hard and soft inputs") {
  Rng rng(44);
  for (int t = 0; t < 25; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform_below(4));
    const int m = 1 + static_cast<int>(rng.uniform_below(4));
    const PreferenceProfile profile = random_profile(n, m, rng);
    const PreferenceTensorData prefs = build_preference_tensor(profile);

    const Ranking ranking{rng.permutation(n + m)};
    const Mat hard = build_ranking_matrix(ranking, n, m);
    CHECK(tsd_on_tape(prefs, hard) == tsd_forward(prefs, hard));

    Mat soft(n + m, n + m);
    for (double& v : soft.data) v = rng.uniform();
    for (int col = 0; col < n + m; ++col) {  // normalize columns
      double s = 0.0;
      for (int row = 0; row < n + m; ++row) s += soft.at(row, col);
      for (int row = 0; row < n + m; ++row) soft.at(row, col) /= s;
    }
    CHECK(tsd_on_tape(prefs, soft) == tsd_forward(prefs, soft));
  }
}

TEST_CASE("loop invariants hold at k = 0 and through the final iteration") {
  PreferenceProfile p;
  p.workers = {order_from({0, 1, 2}), order_from({0, 2, 1})};
  p.firms = {order_from({1, 0, 2}), order_from({0, 2, 1})};
  const Ranking r{{0, 3, 1, 2}};
  CHECK(tsd_loop_invariant_probe(p, r, 0).ok);
  const InvariantReport full = tsd_loop_invariant_probe(p, r, 4);
  INFO(full.violation);
  CHECK(full.ok);
}

TEST_CASE("loop invariants hold on random 4x4 instances at every k") {
  Rng rng(45);
  for (int t = 0; t < 40; ++t) {
    const PreferenceProfile profile = random_profile(4, 4, rng);
    const Ranking ranking{rng.permutation(8)};
    const InvariantReport report = tsd_loop_invariant_probe(profile, ranking, 8);
    INFO(report.violation << " at iteration " << report.iteration);
    REQUIRE(report.ok);
  }
}

TEST_CASE("gradients flow through tsd into the ranking matrix") {
  Rng rng(46);
  const PreferenceProfile profile = random_profile(2, 2, rng);
  const PreferenceTensorData prefs = build_preference_tensor(profile);
  // Soft, column-stochastic ranking away from 0/1 so no ReLU kink is active.
  const std::vector<double> r0{0.4, 0.2, 0.2, 0.2, 0.3, 0.4, 0.1, 0.2,
                               0.2, 0.3, 0.3, 0.2, 0.1, 0.1, 0.4, 0.4};
  const auto f = [&](Tape& tape, Tensor r) {
    const Tensor pw = tape.constant(Shape::stack(2, 3, 3), prefs.worker);
    const Tensor pf = tape.constant(Shape::stack(2, 3, 3), prefs.firm);
    const Tensor weights = tape.constant(Shape::mat(3, 3), {1, -2, 0.5, 2, 1, -1, 0.25, 3, 1});
    return tape.sum(tape.elementwise_mul(tsd(tape, pw, pf, r, 2, 2), weights));
  };
  CHECK(ad::grad_check(f, Shape::mat(4, 4), r0, 1e-6) < 1e-5);
}

#include "matchkit/ranking_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "matchkit/rng.hpp"

namespace matchkit {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

RankingParams RankingParams::init(int d, int d_emb, double tau, std::uint64_t seed) {
  if (d < 1 || d_emb < 1 || tau <= 0.0) throw std::invalid_argument("RankingParams: bad config");
  RankingParams p;
  p.d = d;
  p.d_emb = d_emb;
  p.tau = tau;
  Rng rng(seed);
  const auto fill = [&](std::vector<double>& v, std::size_t count, double bound) {
    v.resize(count);
    for (double& x : v) x = (rng.uniform() * 2.0 - 1.0) * bound;
  };
  const std::size_t mat = static_cast<std::size_t>(d) * static_cast<std::size_t>(d_emb);
  fill(p.wq, mat, 1.0 / std::sqrt(static_cast<double>(d)));
  fill(p.wk, mat, 1.0 / std::sqrt(static_cast<double>(d)));
  fill(p.wv, mat, 1.0 / std::sqrt(static_cast<double>(d)));
  fill(p.w, static_cast<std::size_t>(d_emb), 1.0 / std::sqrt(static_cast<double>(d_emb)));
  p.b = 0.0;
  return p;
}

std::vector<double> RankingParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(num_params()));
  flat.insert(flat.end(), wq.begin(), wq.end());
  flat.insert(flat.end(), wk.begin(), wk.end());
  flat.insert(flat.end(), wv.begin(), wv.end());
  flat.insert(flat.end(), w.begin(), w.end());
  flat.push_back(b);
  return flat;
}

void RankingParams::unflatten(std::span<const double> flat) {
  if (static_cast<int>(flat.size()) != num_params()) {
    throw std::invalid_argument("RankingParams::unflatten: wrong length");
  }
  const std::size_t mat = static_cast<std::size_t>(d) * static_cast<std::size_t>(d_emb);
  auto it = flat.begin();
  wq.assign(it, it + static_cast<std::ptrdiff_t>(mat));
  it += static_cast<std::ptrdiff_t>(mat);
  wk.assign(it, it + static_cast<std::ptrdiff_t>(mat));
  it += static_cast<std::ptrdiff_t>(mat);
  wv.assign(it, it + static_cast<std::ptrdiff_t>(mat));
  it += static_cast<std::ptrdiff_t>(mat);
  w.assign(it, it + d_emb);
  it += d_emb;
  b = *it;
}

RankingParamTensors make_param_tensors(Tape& tape, const RankingParams& params,
                                       bool requires_grad) {
  const Shape ws = Shape::mat(params.d, params.d_emb);
  return RankingParamTensors{
      tape.input(ws, params.wq, requires_grad),
      tape.input(ws, params.wk, requires_grad),
      tape.input(ws, params.wv, requires_grad),
      tape.input(Shape::vec(params.d_emb), params.w, requires_grad),
      tape.scalar(params.b, requires_grad),
  };
}

std::vector<double> rank_vector(std::span<const double> a) {
  const std::size_t k = a.size();
  std::vector<double> out(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (a[j] < a[i] || (a[j] == a[i] && j < i)) ++count;
    }
    out[i] = static_cast<double>(count);
  }
  return out;
}

Tensor self_attention(Tape& tape, Tensor x, const RankingParamTensors& params) {
  const int d_emb = params.wq.shape().dim[1];
  const Tensor q = tape.matmul(x, params.wq);
  const Tensor k = tape.matmul(x, params.wk);
  const Tensor v = tape.matmul(x, params.wv);
  const Tensor logits = tape.scale(tape.matmul(q, tape.transpose(k)),
                                   1.0 / std::sqrt(static_cast<double>(d_emb)));
  return tape.matmul(tape.softmax_rows(logits), v);
}

Tensor tie_break(Tape& tape, Tensor a) {
  const Tensor ranks = tape.constant(a.shape(), rank_vector(a.value()));
  return tape.add(a, ranks);
}

Tensor soft_sort(Tape& tape, Tensor a, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("soft_sort: tau must be positive");
  const int k = a.shape().dim[0];
  const Tensor sorted = tape.sort_desc(a);
  const Tensor diff = tape.sub(tape.transpose(tape.repeat_rows(sorted, k)),
                               tape.repeat_rows(a, k));
  return tape.softmax_rows(tape.scale(tape.abs(diff), -1.0 / tau));
}

Tensor ranking_scores(Tape& tape, Tensor x, const RankingParamTensors& params) {
  const Tensor attended = self_attention(tape, x, params);
  const Tensor linear = tape.add_scalar(tape.matvec(attended, params.w), params.b);
  return tie_break(tape, linear);
}

Tensor ranking_block(Tape& tape, Tensor x, const RankingParamTensors& params, double tau) {
  return soft_sort(tape, ranking_scores(tape, x, params), tau);
}

Tensor contexts_tensor(Tape& tape, const Instance& instance) {
  const Tensor xw = tape.constant(Shape::mat(instance.n, instance.d), instance.contexts_w.data);
  const Tensor xf = tape.constant(Shape::mat(instance.m, instance.d), instance.contexts_f.data);
  return tape.concat_rows(xw, xf);
}

Ranking hard_ranking(const Instance& instance, const RankingParams& params) {
  if (instance.d != params.d) throw std::invalid_argument("hard_ranking: context dim mismatch");
  Tape tape(false);
  const RankingParamTensors pt = make_param_tensors(tape, params, false);
  const Tensor scores = ranking_scores(tape, contexts_tensor(tape, instance), pt);
  const std::vector<double>& s = scores.value();
  Ranking r;
  r.order.resize(s.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  // Tie-broken scores are pairwise distinct; stable sort fixes the order
  // should two ever compare equal.
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
  });
  return r;
}

}  // namespace matchkit

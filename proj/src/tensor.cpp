#include "matchkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace matchkit::ad {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Tensor::value() const { return tape_->node(id_).value; }
const std::vector<double>& Tensor::grad() const { return tape_->node(id_).grad; }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

double Tensor::scalar_value() const {
  const auto& v = value();
  require(v.size() == 1, "Tensor::scalar_value: not a scalar");
  return v[0];
}

Tensor Tape::push(Node&& n) {
  if (!record_) {
    // Forward-only mode never tracks gradients.
    n.requires_grad = false;
  }
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::needs_grad(Tensor t) const {
  require(t.tape_ == this, "Tape: tensor belongs to a different tape");
  return node(t.id_).requires_grad;
}

Tensor Tape::input(const Shape& shape, std::vector<double> values, bool requires_grad) {
  require(static_cast<std::int64_t>(values.size()) == shape.numel(),
          "Tape::input: value count does not match shape");
  Node n;
  n.op = Op::kInput;
  n.shape = shape;
  n.value = std::move(values);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tensor Tape::constant(const Shape& shape, std::vector<double> values) {
  return input(shape, std::move(values), false);
}

Tensor Tape::constant_fill(const Shape& shape, double fill) {
  return input(shape, std::vector<double>(static_cast<std::size_t>(shape.numel()), fill), false);
}

Tensor Tape::scalar(double v, bool requires_grad) {
  return input(Shape::scalar(), {v}, requires_grad);
}

Tensor Tape::add(Tensor a, Tensor b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.shape = a.shape();
  n.parent = {a.id_, b.id_};
  n.requires_grad = needs_grad(a) || needs_grad(b);
  const auto& av = node(a.id_).value;
  const auto& bv = node(b.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
  return push(std::move(n));
}

Tensor Tape::sub(Tensor a, Tensor b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.shape = a.shape();
  n.parent = {a.id_, b.id_};
  n.requires_grad = needs_grad(a) || needs_grad(b);
  const auto& av = node(a.id_).value;
  const auto& bv = node(b.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] - bv[i];
  return push(std::move(n));
}

Tensor Tape::elementwise_mul(Tensor a, Tensor b) {
  require(a.shape() == b.shape(), "elementwise_mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.shape = a.shape();
  n.parent = {a.id_, b.id_};
  n.requires_grad = needs_grad(a) || needs_grad(b);
  const auto& av = node(a.id_).value;
  const auto& bv = node(b.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * bv[i];
  return push(std::move(n));
}

Tensor Tape::scale(Tensor a, double c) {
  Node n;
  n.op = Op::kScale;
  n.shape = a.shape();
  n.parent = {a.id_, -1};
  n.c = c;
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = c * av[i];
  return push(std::move(n));
}

Tensor Tape::add_scalar(Tensor a, Tensor s) {
  require(s.shape().numel() == 1, "add_scalar: second operand must be a scalar");
  Node n;
  n.op = Op::kAddScalar;
  n.shape = a.shape();
  n.parent = {a.id_, s.id_};
  n.requires_grad = needs_grad(a) || needs_grad(s);
  const auto& av = node(a.id_).value;
  const double sv = node(s.id_).value[0];
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + sv;
  return push(std::move(n));
}

Tensor Tape::relu(Tensor a) {
  Node n;
  n.op = Op::kRelu;
  n.shape = a.shape();
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] > 0.0 ? av[i] : 0.0;
  return push(std::move(n));
}

Tensor Tape::abs(Tensor a) {
  Node n;
  n.op = Op::kAbs;
  n.shape = a.shape();
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = std::fabs(av[i]);
  return push(std::move(n));
}

Tensor Tape::log(Tensor a) {
  Node n;
  n.op = Op::kLog;
  n.shape = a.shape();
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = std::log(av[i]);
  return push(std::move(n));
}

Tensor Tape::triangle_window(Tensor a) {
  Node n;
  n.op = Op::kTriangleWindow;
  n.shape = a.shape();
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    n.value[i] = x <= 0.0 ? 0.0 : x <= 1.0 ? x : x <= 2.0 ? 2.0 - x : 0.0;
  }
  return push(std::move(n));
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.rank == 2 && sb.rank == 2 && sa.dim[1] == sb.dim[0], "matmul: shape mismatch");
  const int p = sa.dim[0], q = sa.dim[1], r = sb.dim[1];
  Node n;
  n.op = Op::kMatMul;
  n.shape = Shape::mat(p, r);
  n.parent = {a.id_, b.id_};
  n.requires_grad = needs_grad(a) || needs_grad(b);
  const auto& av = node(a.id_).value;
  const auto& bv = node(b.id_).value;
  n.value.assign(static_cast<std::size_t>(p) * r, 0.0);
  for (int i = 0; i < p; ++i) {
    for (int k = 0; k < q; ++k) {
      const double aik = av[static_cast<std::size_t>(i) * q + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < r; ++j) {
        n.value[static_cast<std::size_t>(i) * r + j] += aik * bv[static_cast<std::size_t>(k) * r + j];
      }
    }
  }
  return push(std::move(n));
}

Tensor Tape::matvec(Tensor a, Tensor v) {
  const Shape& sa = a.shape();
  const Shape& sv = v.shape();
  require(sa.rank == 2 && sv.rank == 1 && sa.dim[1] == sv.dim[0], "matvec: shape mismatch");
  const int p = sa.dim[0], q = sa.dim[1];
  Node n;
  n.op = Op::kMatVec;
  n.shape = Shape::vec(p);
  n.parent = {a.id_, v.id_};
  n.requires_grad = needs_grad(a) || needs_grad(v);
  const auto& av = node(a.id_).value;
  const auto& vv = node(v.id_).value;
  n.value.assign(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    double s = 0.0;
    for (int k = 0; k < q; ++k) s += av[static_cast<std::size_t>(i) * q + k] * vv[static_cast<std::size_t>(k)];
    n.value[static_cast<std::size_t>(i)] = s;
  }
  return push(std::move(n));
}

Tensor Tape::outer(Tensor u, Tensor v) {
  const Shape& su = u.shape();
  const Shape& sv = v.shape();
  require(su.rank == 1 && sv.rank == 1, "outer: operands must be vectors");
  const int p = su.dim[0], q = sv.dim[0];
  Node n;
  n.op = Op::kOuter;
  n.shape = Shape::mat(p, q);
  n.parent = {u.id_, v.id_};
  n.requires_grad = needs_grad(u) || needs_grad(v);
  const auto& uv = node(u.id_).value;
  const auto& vv = node(v.id_).value;
  n.value.resize(static_cast<std::size_t>(p) * q);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < q; ++j) n.value[static_cast<std::size_t>(i) * q + j] = uv[static_cast<std::size_t>(i)] * vv[static_cast<std::size_t>(j)];
  }
  return push(std::move(n));
}

Tensor Tape::transpose(Tensor a) {
  const Shape& sa = a.shape();
  require(sa.rank == 2, "transpose: rank-2 required");
  const int p = sa.dim[0], q = sa.dim[1];
  Node n;
  n.op = Op::kTranspose;
  n.shape = Shape::mat(q, p);
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < q; ++j) n.value[static_cast<std::size_t>(j) * p + i] = av[static_cast<std::size_t>(i) * q + j];
  }
  return push(std::move(n));
}

Tensor Tape::softmax_rows(Tensor a) {
  const Shape& sa = a.shape();
  require(sa.rank == 2, "softmax_rows: rank-2 required");
  const int p = sa.dim[0], q = sa.dim[1];
  Node n;
  n.op = Op::kSoftmaxRows;
  n.shape = sa;
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(av.size());
  for (int i = 0; i < p; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * q;
    double mx = av[base];
    for (int j = 1; j < q; ++j) mx = std::max(mx, av[base + static_cast<std::size_t>(j)]);
    double denom = 0.0;
    for (int j = 0; j < q; ++j) {
      const double e = std::exp(av[base + static_cast<std::size_t>(j)] - mx);
      n.value[base + static_cast<std::size_t>(j)] = e;
      denom += e;
    }
    for (int j = 0; j < q; ++j) n.value[base + static_cast<std::size_t>(j)] /= denom;
  }
  return push(std::move(n));
}

Tensor Tape::cumsum_row(Tensor v) {
  require(v.shape().rank == 1, "cumsum_row: rank-1 required");
  Node n;
  n.op = Op::kCumsumRow;
  n.shape = v.shape();
  n.parent = {v.id_, -1};
  n.requires_grad = needs_grad(v);
  const auto& vv = node(v.id_).value;
  n.value.resize(vv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < vv.size(); ++i) {
    s += vv[i];
    n.value[i] = s;
  }
  return push(std::move(n));
}

Tensor Tape::colsum(Tensor a) {
  const Shape& sa = a.shape();
  require(sa.rank == 2, "colsum: rank-2 required");
  const int p = sa.dim[0], q = sa.dim[1];
  Node n;
  n.op = Op::kColSum;
  n.shape = Shape::vec(q);
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.assign(static_cast<std::size_t>(q), 0.0);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < q; ++j) n.value[static_cast<std::size_t>(j)] += av[static_cast<std::size_t>(i) * q + j];
  }
  return push(std::move(n));
}

Tensor Tape::sum(Tensor a) {
  Node n;
  n.op = Op::kSum;
  n.shape = Shape::scalar();
  n.parent = {a.id_, -1};
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value = {std::accumulate(av.begin(), av.end(), 0.0)};
  return push(std::move(n));
}

Tensor Tape::repeat_rows(Tensor v, int times) {
  require(v.shape().rank == 1 && times >= 1, "repeat_rows: rank-1 input required");
  const int q = v.shape().dim[0];
  Node n;
  n.op = Op::kRepeatRows;
  n.shape = Shape::mat(times, q);
  n.parent = {v.id_, -1};
  n.p0 = times;
  n.requires_grad = needs_grad(v);
  const auto& vv = node(v.id_).value;
  n.value.resize(static_cast<std::size_t>(times) * q);
  for (int i = 0; i < times; ++i) {
    std::copy(vv.begin(), vv.end(), n.value.begin() + static_cast<std::ptrdiff_t>(i) * q);
  }
  return push(std::move(n));
}

Tensor Tape::concat_rows(Tensor a, Tensor b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.rank == 2 && sb.rank == 2 && sa.dim[1] == sb.dim[1], "concat_rows: shape mismatch");
  Node n;
  n.op = Op::kConcatRows;
  n.shape = Shape::mat(sa.dim[0] + sb.dim[0], sa.dim[1]);
  n.parent = {a.id_, b.id_};
  n.p0 = sa.dim[0];
  n.requires_grad = needs_grad(a) || needs_grad(b);
  const auto& av = node(a.id_).value;
  const auto& bv = node(b.id_).value;
  n.value.reserve(av.size() + bv.size());
  n.value.insert(n.value.end(), av.begin(), av.end());
  n.value.insert(n.value.end(), bv.begin(), bv.end());
  return push(std::move(n));
}

Tensor Tape::stack_rows(std::span<const Tensor> rows_in) {
  require(!rows_in.empty(), "stack_rows: no rows");
  const int q = rows_in[0].shape().dim[0];
  Node n;
  n.op = Op::kStackRows;
  n.shape = Shape::mat(static_cast<int>(rows_in.size()), q);
  n.requires_grad = false;
  n.extra_parents.reserve(rows_in.size());
  n.value.reserve(rows_in.size() * static_cast<std::size_t>(q));
  for (const Tensor& r : rows_in) {
    require(r.shape().rank == 1 && r.shape().dim[0] == q, "stack_rows: row shape mismatch");
    n.requires_grad = n.requires_grad || needs_grad(r);
    n.extra_parents.push_back(r.id_);
    const auto& rv = node(r.id_).value;
    n.value.insert(n.value.end(), rv.begin(), rv.end());
  }
  return push(std::move(n));
}

Tensor Tape::slice(Tensor v, int lo, int hi) {
  require(v.shape().rank == 1 && lo >= 0 && lo <= hi && hi <= v.shape().dim[0],
          "slice: bad bounds");
  Node n;
  n.op = Op::kSlice;
  n.shape = Shape::vec(hi - lo);
  n.parent = {v.id_, -1};
  n.p0 = lo;
  n.p1 = hi;
  n.requires_grad = needs_grad(v);
  const auto& vv = node(v.id_).value;
  n.value.assign(vv.begin() + lo, vv.begin() + hi);
  return push(std::move(n));
}

Tensor Tape::row(Tensor a, int r) {
  const Shape& sa = a.shape();
  require(sa.rank == 2 && r >= 0 && r < sa.dim[0], "row: bad index");
  const int q = sa.dim[1];
  Node n;
  n.op = Op::kRow;
  n.shape = Shape::vec(q);
  n.parent = {a.id_, -1};
  n.p0 = r;
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.assign(av.begin() + static_cast<std::ptrdiff_t>(r) * q,
                 av.begin() + static_cast<std::ptrdiff_t>(r + 1) * q);
  return push(std::move(n));
}

Tensor Tape::rows(Tensor a, int r0, int r1) {
  const Shape& sa = a.shape();
  require(sa.rank == 2 && r0 >= 0 && r0 <= r1 && r1 <= sa.dim[0], "rows: bad bounds");
  const int q = sa.dim[1];
  Node n;
  n.op = Op::kRows;
  n.shape = Shape::mat(r1 - r0, q);
  n.parent = {a.id_, -1};
  n.p0 = r0;
  n.p1 = r1;
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.assign(av.begin() + static_cast<std::ptrdiff_t>(r0) * q,
                 av.begin() + static_cast<std::ptrdiff_t>(r1) * q);
  return push(std::move(n));
}

Tensor Tape::col_segment(Tensor a, int col, int r0, int r1) {
  const Shape& sa = a.shape();
  require(sa.rank == 2 && col >= 0 && col < sa.dim[1] && r0 >= 0 && r0 <= r1 && r1 <= sa.dim[0],
          "col_segment: bad bounds");
  const int q = sa.dim[1];
  Node n;
  n.op = Op::kColSegment;
  n.shape = Shape::vec(r1 - r0);
  n.parent = {a.id_, -1};
  n.p0 = col;
  n.p1 = r0;
  n.p2 = r1;
  n.requires_grad = needs_grad(a);
  const auto& av = node(a.id_).value;
  n.value.resize(static_cast<std::size_t>(r1 - r0));
  for (int i = r0; i < r1; ++i) n.value[static_cast<std::size_t>(i - r0)] = av[static_cast<std::size_t>(i) * q + col];
  return push(std::move(n));
}

Tensor Tape::append_zero(Tensor v) {
  require(v.shape().rank == 1, "append_zero: rank-1 required");
  Node n;
  n.op = Op::kAppendZero;
  n.shape = Shape::vec(v.shape().dim[0] + 1);
  n.parent = {v.id_, -1};
  n.requires_grad = needs_grad(v);
  const auto& vv = node(v.id_).value;
  n.value.reserve(vv.size() + 1);
  n.value.assign(vv.begin(), vv.end());
  n.value.push_back(0.0);
  return push(std::move(n));
}

Tensor Tape::sort_desc(Tensor v) {
  require(v.shape().rank == 1, "sort_desc: rank-1 required");
  const int k = v.shape().dim[0];
  Node n;
  n.op = Op::kSortDesc;
  n.shape = v.shape();
  n.parent = {v.id_, -1};
  n.requires_grad = needs_grad(v);
  const auto& vv = node(v.id_).value;
  n.perm.resize(static_cast<std::size_t>(k));
  std::iota(n.perm.begin(), n.perm.end(), 0);
  std::stable_sort(n.perm.begin(), n.perm.end(),
                   [&](int a, int b) { return vv[static_cast<std::size_t>(a)] > vv[static_cast<std::size_t>(b)]; });
  n.value.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) n.value[static_cast<std::size_t>(i)] = vv[static_cast<std::size_t>(n.perm[static_cast<std::size_t>(i)])];
  return push(std::move(n));
}

Tensor Tape::stack_contract(Tensor s, Tensor v) {
  const Shape& ss = s.shape();
  const Shape& sv = v.shape();
  require(ss.rank == 3 && sv.rank == 1 && ss.dim[0] == sv.dim[0], "stack_contract: shape mismatch");
  const int count = ss.dim[0], p = ss.dim[1], q = ss.dim[2];
  const std::size_t sz = static_cast<std::size_t>(p) * q;
  Node n;
  n.op = Op::kStackContract;
  n.shape = Shape::mat(p, q);
  n.parent = {s.id_, v.id_};
  n.requires_grad = needs_grad(s) || needs_grad(v);
  const auto& svv = node(s.id_).value;
  const auto& vv = node(v.id_).value;
  n.value.assign(sz, 0.0);
  for (int i = 0; i < count; ++i) {
    const double w = vv[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    const double* src = svv.data() + static_cast<std::size_t>(i) * sz;
    for (std::size_t e = 0; e < sz; ++e) n.value[e] += w * src[e];
  }
  return push(std::move(n));
}

Tensor Tape::stack_add_matrix(Tensor s, Tensor m) {
  const Shape& ss = s.shape();
  const Shape& sm = m.shape();
  require(ss.rank == 3 && sm.rank == 2 && ss.dim[1] == sm.dim[0] && ss.dim[2] == sm.dim[1],
          "stack_add_matrix: shape mismatch");
  const int count = ss.dim[0];
  const std::size_t sz = static_cast<std::size_t>(ss.dim[1]) * ss.dim[2];
  Node n;
  n.op = Op::kStackAddMatrix;
  n.shape = ss;
  n.parent = {s.id_, m.id_};
  n.requires_grad = needs_grad(s) || needs_grad(m);
  const auto& sv = node(s.id_).value;
  const auto& mv = node(m.id_).value;
  n.value.resize(sv.size());
  for (int i = 0; i < count; ++i) {
    const double* src = sv.data() + static_cast<std::size_t>(i) * sz;
    double* dst = n.value.data() + static_cast<std::size_t>(i) * sz;
    for (std::size_t e = 0; e < sz; ++e) dst[e] = src[e] + mv[e];
  }
  return push(std::move(n));
}

Tensor Tape::stack_scale(Tensor s, Tensor v) {
  const Shape& ss = s.shape();
  const Shape& sv = v.shape();
  require(ss.rank == 3 && sv.rank == 1 && ss.dim[0] == sv.dim[0], "stack_scale: shape mismatch");
  const int count = ss.dim[0];
  const std::size_t sz = static_cast<std::size_t>(ss.dim[1]) * ss.dim[2];
  Node n;
  n.op = Op::kStackScale;
  n.shape = ss;
  n.parent = {s.id_, v.id_};
  n.requires_grad = needs_grad(s) || needs_grad(v);
  const auto& svv = node(s.id_).value;
  const auto& vv = node(v.id_).value;
  n.value.resize(svv.size());
  for (int i = 0; i < count; ++i) {
    const double w = vv[static_cast<std::size_t>(i)];
    const double* src = svv.data() + static_cast<std::size_t>(i) * sz;
    double* dst = n.value.data() + static_cast<std::size_t>(i) * sz;
    for (std::size_t e = 0; e < sz; ++e) dst[e] = w * src[e];
  }
  return push(std::move(n));
}

std::vector<double>& Tape::grad_buffer(int id) {
  Node& nd = node(id);
  if (nd.grad.empty()) nd.grad.assign(nd.value.size(), 0.0);
  return nd.grad;
}

void Tape::backward(Tensor out) {
  require(out.tape_ == this, "backward: output not on this tape");
  require(record_, "backward: tape is in forward-only mode");
  require(node(out.id_).shape.numel() == 1, "backward: output is not a scalar");
  for (Node& nd : nodes_) nd.grad.clear();
  grad_buffer(out.id_)[0] = 1.0;
  for (int id = out.id_; id >= 0; --id) {
    Node& nd = node(id);
    if (!nd.requires_grad || nd.grad.empty()) continue;
    backward_step(id);
  }
}

void Tape::backward_step(int id) {
  Node& nd = node(id);
  const std::vector<double>& g = nd.grad;
  const auto pgrad = [&](int slot) -> std::vector<double>* {
    const int pid = slot < 2 ? nd.parent[static_cast<std::size_t>(slot)] : -1;
    if (pid < 0 || !node(pid).requires_grad) return nullptr;
    return &grad_buffer(pid);
  };
  const auto pval = [&](int slot) -> const std::vector<double>& {
    return node(nd.parent[static_cast<std::size_t>(slot)]).value;
  };

  switch (nd.op) {
    case Op::kInput:
      break;
    case Op::kAdd: {
      if (auto* ga = pgrad(0)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = pgrad(1)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      break;
    }
    case Op::kSub: {
      if (auto* ga = pgrad(0)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = pgrad(1)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      break;
    }
    case Op::kMul: {
      if (auto* ga = pgrad(0)) {
        const auto& bv = pval(1);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
      }
      if (auto* gb = pgrad(1)) {
        const auto& av = pval(0);
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
      }
      break;
    }
    case Op::kScale: {
      if (auto* ga = pgrad(0)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += nd.c * g[i];
      break;
    }
    case Op::kAddScalar: {
      if (auto* ga = pgrad(0)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gs = pgrad(1)) {
        double s = 0.0;
        for (double v : g) s += v;
        (*gs)[0] += s;
      }
      break;
    }
    case Op::kRelu: {
      if (auto* ga = pgrad(0)) {
        const auto& xv = pval(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > 0.0) (*ga)[i] += g[i];
        }
      }
      break;
    }
    case Op::kAbs: {
      if (auto* ga = pgrad(0)) {
        const auto& xv = pval(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > 0.0) (*ga)[i] += g[i];
          else if (xv[i] < 0.0) (*ga)[i] -= g[i];
        }
      }
      break;
    }
    case Op::kLog: {
      if (auto* ga = pgrad(0)) {
        const auto& xv = pval(0);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / xv[i];
      }
      break;
    }
    case Op::kTriangleWindow: {
      if (auto* ga = pgrad(0)) {
        const auto& xv = pval(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = xv[i];
          if (x > 0.0 && x <= 1.0) (*ga)[i] += g[i];
          else if (x > 1.0 && x <= 2.0) (*ga)[i] -= g[i];
        }
      }
      break;
    }
    case Op::kMatMul: {
      const int p = nd.shape.dim[0], r = nd.shape.dim[1];
      const int q = node(nd.parent[0]).shape.dim[1];
      if (auto* ga = pgrad(0)) {
        const auto& bv = pval(1);
        for (int i = 0; i < p; ++i) {
          for (int k = 0; k < q; ++k) {
            double s = 0.0;
            for (int j = 0; j < r; ++j) s += g[static_cast<std::size_t>(i) * r + j] * bv[static_cast<std::size_t>(k) * r + j];
            (*ga)[static_cast<std::size_t>(i) * q + k] += s;
          }
        }
      }
      if (auto* gb = pgrad(1)) {
        const auto& av = pval(0);
        for (int k = 0; k < q; ++k) {
          for (int i = 0; i < p; ++i) {
            const double aik = av[static_cast<std::size_t>(i) * q + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < r; ++j) (*gb)[static_cast<std::size_t>(k) * r + j] += aik * g[static_cast<std::size_t>(i) * r + j];
          }
        }
      }
      break;
    }
    case Op::kMatVec: {
      const int p = nd.shape.dim[0];
      const int q = node(nd.parent[0]).shape.dim[1];
      if (auto* ga = pgrad(0)) {
        const auto& vv = pval(1);
        for (int i = 0; i < p; ++i) {
          const double gi = g[static_cast<std::size_t>(i)];
          if (gi == 0.0) continue;
          for (int k = 0; k < q; ++k) (*ga)[static_cast<std::size_t>(i) * q + k] += gi * vv[static_cast<std::size_t>(k)];
        }
      }
      if (auto* gv = pgrad(1)) {
        const auto& av = pval(0);
        for (int i = 0; i < p; ++i) {
          const double gi = g[static_cast<std::size_t>(i)];
          if (gi == 0.0) continue;
          for (int k = 0; k < q; ++k) (*gv)[static_cast<std::size_t>(k)] += gi * av[static_cast<std::size_t>(i) * q + k];
        }
      }
      break;
    }
    case Op::kOuter: {
      const int p = nd.shape.dim[0], q = nd.shape.dim[1];
      if (auto* gu = pgrad(0)) {
        const auto& vv = pval(1);
        for (int i = 0; i < p; ++i) {
          double s = 0.0;
          for (int j = 0; j < q; ++j) s += g[static_cast<std::size_t>(i) * q + j] * vv[static_cast<std::size_t>(j)];
          (*gu)[static_cast<std::size_t>(i)] += s;
        }
      }
      if (auto* gv = pgrad(1)) {
        const auto& uv = pval(0);
        for (int j = 0; j < q; ++j) {
          double s = 0.0;
          for (int i = 0; i < p; ++i) s += g[static_cast<std::size_t>(i) * q + j] * uv[static_cast<std::size_t>(i)];
          (*gv)[static_cast<std::size_t>(j)] += s;
        }
      }
      break;
    }
    case Op::kTranspose: {
      if (auto* ga = pgrad(0)) {
        const int q = nd.shape.dim[0], p = nd.shape.dim[1];  // parent is p x q
        for (int j = 0; j < q; ++j) {
          for (int i = 0; i < p; ++i) (*ga)[static_cast<std::size_t>(i) * q + j] += g[static_cast<std::size_t>(j) * p + i];
        }
      }
      break;
    }
    case Op::kSoftmaxRows: {
      if (auto* ga = pgrad(0)) {
        const int p = nd.shape.dim[0], q = nd.shape.dim[1];
        for (int i = 0; i < p; ++i) {
          const std::size_t base = static_cast<std::size_t>(i) * q;
          double dot = 0.0;
          for (int j = 0; j < q; ++j) dot += g[base + static_cast<std::size_t>(j)] * nd.value[base + static_cast<std::size_t>(j)];
          for (int j = 0; j < q; ++j) {
            (*ga)[base + static_cast<std::size_t>(j)] +=
                (g[base + static_cast<std::size_t>(j)] - dot) * nd.value[base + static_cast<std::size_t>(j)];
          }
        }
      }
      break;
    }
    case Op::kCumsumRow: {
      if (auto* ga = pgrad(0)) {
        double s = 0.0;
        for (std::size_t i = g.size(); i-- > 0;) {
          s += g[i];
          (*ga)[i] += s;
        }
      }
      break;
    }
    case Op::kColSum: {
      if (auto* ga = pgrad(0)) {
        const int p = node(nd.parent[0]).shape.dim[0];
        const int q = nd.shape.dim[0];
        for (int i = 0; i < p; ++i) {
          for (int j = 0; j < q; ++j) (*ga)[static_cast<std::size_t>(i) * q + j] += g[static_cast<std::size_t>(j)];
        }
      }
      break;
    }
    case Op::kSum: {
      if (auto* ga = pgrad(0)) {
        const double gv = g[0];
        for (double& v : *ga) v += gv;
      }
      break;
    }
    case Op::kRepeatRows: {
      if (auto* ga = pgrad(0)) {
        const int times = nd.p0;
        const int q = nd.shape.dim[1];
        for (int i = 0; i < times; ++i) {
          for (int j = 0; j < q; ++j) (*ga)[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i) * q + j];
        }
      }
      break;
    }
    case Op::kConcatRows: {
      const int q = nd.shape.dim[1];
      const std::size_t split = static_cast<std::size_t>(nd.p0) * q;
      if (auto* ga = pgrad(0)) for (std::size_t i = 0; i < split; ++i) (*ga)[i] += g[i];
      if (auto* gb = pgrad(1)) for (std::size_t i = split; i < g.size(); ++i) (*gb)[i - split] += g[i];
      break;
    }
    case Op::kStackRows: {
      const int q = nd.shape.dim[1];
      for (std::size_t r = 0; r < nd.extra_parents.size(); ++r) {
        const int pid = nd.extra_parents[r];
        if (!node(pid).requires_grad) continue;
        auto& gr = grad_buffer(pid);
        for (int j = 0; j < q; ++j) gr[static_cast<std::size_t>(j)] += g[r * static_cast<std::size_t>(q) + static_cast<std::size_t>(j)];
      }
      break;
    }
    case Op::kSlice: {
      if (auto* ga = pgrad(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[static_cast<std::size_t>(nd.p0) + i] += g[i];
      }
      break;
    }
    case Op::kRow: {
      if (auto* ga = pgrad(0)) {
        const int q = nd.shape.dim[0];
        for (int j = 0; j < q; ++j) (*ga)[static_cast<std::size_t>(nd.p0) * q + j] += g[static_cast<std::size_t>(j)];
      }
      break;
    }
    case Op::kRows: {
      if (auto* ga = pgrad(0)) {
        const int q = nd.shape.dim[1];
        const std::size_t off = static_cast<std::size_t>(nd.p0) * q;
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[off + i] += g[i];
      }
      break;
    }
    case Op::kColSegment: {
      if (auto* ga = pgrad(0)) {
        const int q = node(nd.parent[0]).shape.dim[1];
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*ga)[static_cast<std::size_t>(nd.p1 + static_cast<int>(i)) * q + nd.p0] += g[i];
        }
      }
      break;
    }
    case Op::kAppendZero: {
      if (auto* ga = pgrad(0)) {
        for (std::size_t i = 0; i + 1 < g.size(); ++i) (*ga)[i] += g[i];
      }
      break;
    }
    case Op::kSortDesc: {
      if (auto* ga = pgrad(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[static_cast<std::size_t>(nd.perm[i])] += g[i];
      }
      break;
    }
    case Op::kStackContract: {
      const int count = node(nd.parent[0]).shape.dim[0];
      const std::size_t sz = g.size();
      if (auto* gs = pgrad(0)) {
        const auto& vv = pval(1);
        for (int i = 0; i < count; ++i) {
          const double w = vv[static_cast<std::size_t>(i)];
          if (w == 0.0) continue;
          double* dst = gs->data() + static_cast<std::size_t>(i) * sz;
          for (std::size_t e = 0; e < sz; ++e) dst[e] += w * g[e];
        }
      }
      if (auto* gv = pgrad(1)) {
        const auto& sv = pval(0);
        for (int i = 0; i < count; ++i) {
          const double* src = sv.data() + static_cast<std::size_t>(i) * sz;
          double s = 0.0;
          for (std::size_t e = 0; e < sz; ++e) s += src[e] * g[e];
          (*gv)[static_cast<std::size_t>(i)] += s;
        }
      }
      break;
    }
    case Op::kStackAddMatrix: {
      const int count = nd.shape.dim[0];
      const std::size_t sz = static_cast<std::size_t>(nd.shape.dim[1]) * nd.shape.dim[2];
      if (auto* gs = pgrad(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gs)[i] += g[i];
      }
      if (auto* gm = pgrad(1)) {
        for (int i = 0; i < count; ++i) {
          const double* src = g.data() + static_cast<std::size_t>(i) * sz;
          for (std::size_t e = 0; e < sz; ++e) (*gm)[e] += src[e];
        }
      }
      break;
    }
    case Op::kStackScale: {
      const int count = nd.shape.dim[0];
      const std::size_t sz = static_cast<std::size_t>(nd.shape.dim[1]) * nd.shape.dim[2];
      if (auto* gs = pgrad(0)) {
        const auto& vv = pval(1);
        for (int i = 0; i < count; ++i) {
          const double w = vv[static_cast<std::size_t>(i)];
          if (w == 0.0) continue;
          const double* src = g.data() + static_cast<std::size_t>(i) * sz;
          double* dst = gs->data() + static_cast<std::size_t>(i) * sz;
          for (std::size_t e = 0; e < sz; ++e) dst[e] += w * src[e];
        }
      }
      if (auto* gv = pgrad(1)) {
        const auto& sv = pval(0);
        for (int i = 0; i < count; ++i) {
          const double* s0 = sv.data() + static_cast<std::size_t>(i) * sz;
          const double* g0 = g.data() + static_cast<std::size_t>(i) * sz;
          double s = 0.0;
          for (std::size_t e = 0; e < sz; ++e) s += s0[e] * g0[e];
          (*gv)[static_cast<std::size_t>(i)] += s;
        }
      }
      break;
    }
  }
}

double grad_check(const std::function<Tensor(Tape&, Tensor)>& f, const Shape& xshape,
                  const std::vector<double>& x0, double eps) {
  std::vector<double> analytic;
  {
    Tape tape(true);
    Tensor x = tape.input(xshape, x0, true);
    Tensor y = f(tape, x);
    if (!std::isfinite(y.scalar_value())) throw std::runtime_error("grad_check: non-finite output");
    tape.backward(y);
    analytic = x.grad();
    if (analytic.empty()) analytic.assign(x0.size(), 0.0);
  }
  const auto eval = [&](const std::vector<double>& xv) {
    Tape tape(false);
    Tensor x = tape.input(xshape, xv, false);
    const double v = f(tape, x).scalar_value();
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite intermediate");
    return v;
  };
  double worst = 0.0;
  std::vector<double> xv = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    xv[i] = x0[i] + eps;
    const double up = eval(xv);
    xv[i] = x0[i] - eps;
    const double dn = eval(xv);
    xv[i] = x0[i];
    const double numeric = (up - dn) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace matchkit::ad

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace matchkit::ad {

// Tensor extents, rank 0 (scalar) through 3 (stack of matrices).
struct Shape {
  int rank = 0;
  std::array<int, 3> dim{1, 1, 1};

  static Shape scalar() { return Shape{}; }
  static Shape vec(int k) { return Shape{1, {k, 1, 1}}; }
  static Shape mat(int r, int c) { return Shape{2, {r, c, 1}}; }
  static Shape stack(int count, int r, int c) { return Shape{3, {count, r, c}}; }

  std::int64_t numel() const {
    std::int64_t p = 1;
    for (int i = 0; i < rank; ++i) p *= dim[static_cast<std::size_t>(i)];
    return p;
  }
  bool operator==(const Shape&) const = default;
};

class Tape;

// Cheap handle to a node on a Tape; invalidated by Tape destruction.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  const std::vector<double>& value() const;
  // Gradient accumulated by Tape::backward; empty when none was propagated.
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  double scalar_value() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Define-by-run reverse-mode tape over dense double tensors. One tape per
// forward/backward pass; a tape and its tensors are confined to one thread.
class Tape {
 public:
  // record=false evaluates forward values only (no gradients available).
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Tensor input(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  Tensor constant(const Shape& shape, std::vector<double> values);
  Tensor constant_fill(const Shape& shape, double fill);
  Tensor scalar(double v, bool requires_grad = false);

  // Elementwise, matching shapes (any rank).
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor elementwise_mul(Tensor a, Tensor b);
  Tensor scale(Tensor a, double c);
  // Broadcast-add a rank-0 tensor to every element.
  Tensor add_scalar(Tensor a, Tensor s);

  Tensor relu(Tensor a);
  Tensor abs(Tensor a);
  Tensor log(Tensor a);
  // 0 for x<=0, x on (0,1], 2-x on (1,2], 0 for x>2; derivative from the
  // branch containing the point.
  Tensor triangle_window(Tensor a);

  Tensor matmul(Tensor a, Tensor b);
  Tensor matvec(Tensor a, Tensor v);
  Tensor outer(Tensor u, Tensor v);
  Tensor transpose(Tensor a);
  Tensor softmax_rows(Tensor a);
  Tensor cumsum_row(Tensor v);
  Tensor colsum(Tensor a);
  Tensor sum(Tensor a);
  Tensor repeat_rows(Tensor v, int times);
  Tensor concat_rows(Tensor a, Tensor b);
  Tensor stack_rows(std::span<const Tensor> rows_in);

  Tensor slice(Tensor v, int lo, int hi);
  Tensor row(Tensor a, int r);
  Tensor rows(Tensor a, int r0, int r1);
  Tensor col_segment(Tensor a, int col, int r0, int r1);
  Tensor append_zero(Tensor v);
  // Decreasing sort; gradient scatters through the sort permutation. Ties
  // keep the lower input index first.
  Tensor sort_desc(Tensor v);

  // Stack ops (rank-3 S of `count` r-by-c matrices).
  Tensor stack_contract(Tensor s, Tensor v);    // sum_i v_i * S_i   -> mat
  Tensor stack_add_matrix(Tensor s, Tensor m);  // S_i + M           -> stack
  Tensor stack_scale(Tensor s, Tensor v);       // v_i * S_i         -> stack

  // Populates gradients of every requires_grad node reachable from `out`.
  void backward(Tensor out);

 private:
  friend class Tensor;

  enum class Op : std::uint8_t {
    kInput,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddScalar,
    kRelu,
    kAbs,
    kLog,
    kTriangleWindow,
    kMatMul,
    kMatVec,
    kOuter,
    kTranspose,
    kSoftmaxRows,
    kCumsumRow,
    kColSum,
    kSum,
    kRepeatRows,
    kConcatRows,
    kStackRows,
    kSlice,
    kRow,
    kRows,
    kColSegment,
    kAppendZero,
    kSortDesc,
    kStackContract,
    kStackAddMatrix,
    kStackScale,
  };

  struct Node {
    Op op = Op::kInput;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;            // allocated on demand during backward
    std::array<int, 2> parent{-1, -1};
    std::vector<int> extra_parents;      // stack_rows only
    std::vector<int> perm;               // sort_desc only
    int p0 = 0, p1 = 0, p2 = 0;          // op parameters (slice bounds etc.)
    double c = 0.0;
    bool requires_grad = false;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor push(Node&& n);
  bool needs_grad(Tensor t) const;
  void backward_step(int id);
  std::vector<double>& grad_buffer(int id);

  std::vector<Node> nodes_;
  bool record_ = true;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for the scalar-valued builder f evaluated at x0. Throws if f produces a
// non-finite value.
double grad_check(const std::function<Tensor(Tape&, Tensor)>& f, const Shape& xshape,
                  const std::vector<double>& x0, double eps = 1e-5);

}  // namespace matchkit::ad

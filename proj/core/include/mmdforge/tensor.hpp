#ifndef MMDFORGE_TENSOR_HPP
#define MMDFORGE_TENSOR_HPP

#include <Eigen/Dense>
#include <memory>
#include <vector>

namespace mmdforge {

using Matrix = Eigen::MatrixXd;

class Tape;

// Dense 64-bit matrix participating in a recorded computation graph.
// Rank is at most two: scalars are 1x1, row vectors 1xd. A tensor is
// "tracked" when it carries a handle into the active tape; untracked
// tensors act as constants.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor scalar(double value);

  const Matrix& v() const { return *value_; }
  Eigen::Index rows() const { return value_->rows(); }
  Eigen::Index cols() const { return value_->cols(); }
  bool defined() const { return static_cast<bool>(value_); }
  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  const Tape* owner() const { return owner_; }

  // Value of a 1x1 tensor; ContractError otherwise.
  double item() const;

 private:
  friend class Tape;
  friend Tensor detail_record(int op, const Tensor& a, const Tensor& b, double attr0,
                              double attr1, Matrix out);
  Tensor(std::shared_ptr<const Matrix> value, int node, const Tape* owner)
      : value_(std::move(value)), node_(node), owner_(owner) {}

  std::shared_ptr<const Matrix> value_;
  int node_ = -1;
  const Tape* owner_ = nullptr;
};

// Append-only record of primitive operations (define-by-run, rebuilt per
// training step). Backward rules are themselves expressed through the
// primitive ops, so gradients can stay on the tape and be differentiated
// again (needed for the witness gradient penalty).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked leaf holding a copy of `value`.
  Tensor leaf(const Matrix& value);

  // d(loss)/d(target) for each target, as plain matrices. Untouched targets
  // get zero gradients. Loss must be a tracked scalar.
  std::vector<Matrix> gradients(const Tensor& loss, const std::vector<Tensor>& targets);

  // Same traversal, but the returned gradients are tracked tensors recorded
  // on this tape, so expressions built from them can be differentiated again.
  std::vector<Tensor> gradients_tracked(const Tensor& loss, const std::vector<Tensor>& targets);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class TapeScope;
  friend Tensor detail_record(int op, const Tensor& a, const Tensor& b, double attr0,
                              double attr1, Matrix out);

  struct Node {
    int op;
    Tensor a;
    Tensor b;
    Tensor out;       // self-reference, so backward rules can reuse outputs
    double attr0 = 0.0;
    double attr1 = 0.0;
  };

  std::vector<Tensor> backward(const Tensor& loss, const std::vector<Tensor>& targets,
                               bool track_graph);

  std::vector<Node> nodes_;
};

// Activates a tape for the current thread for the scope's lifetime.
// Exactly one tape may be active per execution context; scopes nest.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  Tape& tape() { return tape_; }

 private:
  Tape tape_;
  Tape* previous_;
};

Tape* active_tape();

// ---- primitive operations ----
// Each op validates shapes, evaluates, checks the result for NaN/Inf, and
// records itself on the active tape when any input is tracked.

Tensor matmul(const Tensor& a, const Tensor& b);
// Broadcast rules: same shape, or b is 1xm (row bias) or nx1 (column bias).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor elu(const Tensor& x);
Tensor maximum(const Tensor& x, double threshold);  // elementwise max(x, c)
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double addend);
Tensor sum(const Tensor& x);   // full reduction to 1x1
Tensor mean(const Tensor& x);  // full reduction to 1x1
Tensor transpose(const Tensor& x);
Tensor broadcast(const Tensor& x, Eigen::Index rows, Eigen::Index cols);  // from 1x1
Tensor slice_rows(const Tensor& x, Eigen::Index begin, Eigen::Index count);
Tensor pad_rows(const Tensor& x, Eigen::Index begin, Eigen::Index total);
// D(i,j) = ||x_i - y_j||^2, computed as ||x||^2 + ||y||^2 - 2 x.y clamped at 0.
Tensor pairwise_sqdist(const Tensor& x, const Tensor& y);

}  // namespace mmdforge

#endif  // MMDFORGE_TENSOR_HPP

#include "mmdforge/tensor.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "mmdforge/errors.hpp"

namespace mmdforge {

namespace {

enum OpKind : int {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kExp,
  kSquare,
  kSqrt,
  kReciprocal,
  kTanh,
  kElu,
  kMaximum,
  kScale,
  kAddScalar,
  kSum,
  kMean,
  kTranspose,
  kBroadcast,
  kSliceRows,
  kPadRows,
  kPairwiseSqdist,
};

const char* op_name(int op) {
  switch (op) {
    case kLeaf: return "leaf";
    case kMatmul: return "matmul";
    case kAdd: return "add";
    case kSub: return "sub";
    case kMul: return "mul";
    case kNeg: return "neg";
    case kExp: return "exp";
    case kSquare: return "square";
    case kSqrt: return "sqrt";
    case kReciprocal: return "reciprocal";
    case kTanh: return "tanh";
    case kElu: return "elu";
    case kMaximum: return "maximum";
    case kScale: return "scale";
    case kAddScalar: return "add_scalar";
    case kSum: return "sum";
    case kMean: return "mean";
    case kTranspose: return "transpose";
    case kBroadcast: return "broadcast";
    case kSliceRows: return "slice_rows";
    case kPadRows: return "pad_rows";
    case kPairwiseSqdist: return "pairwise_sqdist";
    default: return "unknown";
  }
}

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_suppress_recording = false;

struct SuppressRecording {
  SuppressRecording() : previous(g_suppress_recording) { g_suppress_recording = true; }
  ~SuppressRecording() { g_suppress_recording = previous; }
  bool previous;
};

std::string shape_of(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " +
                       shape_of(b));
}

void require_same_tape(const char* op, const Tensor& t) {
  if (t.tracked() && t.owner() != g_active_tape) {
    throw ContractError(std::string(op) + ": operand belongs to a different tape");
  }
}

}  // namespace

// Tape-internal record hook, friended by Tape.
Tensor detail_record(int op, const Tensor& a, const Tensor& b, double attr0, double attr1,
                     Matrix out);

Tensor Tensor::constant(Matrix value) {
  if (!value.allFinite()) throw NumericError("constant: non-finite value");
  return Tensor(std::make_shared<const Matrix>(std::move(value)), -1, nullptr);
}

Tensor Tensor::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

double Tensor::item() const {
  if (!defined() || rows() != 1 || cols() != 1) {
    throw ContractError("item: tensor is not a scalar");
  }
  return (*value_)(0, 0);
}

Tensor detail_record(int op, const Tensor& a, const Tensor& b, double attr0, double attr1,
                     Matrix out) {
  if (!out.allFinite()) {
    throw NumericError(std::string(op_name(op)) + " produced a non-finite value");
  }
  Tape* tape = g_active_tape;
  const bool any_tracked = (a.defined() && a.tracked()) || (b.defined() && b.tracked());
  if (any_tracked) {
    require_same_tape(op_name(op), a);
    if (b.defined()) require_same_tape(op_name(op), b);
  }
  const bool track = tape != nullptr && !g_suppress_recording && any_tracked;
  auto value = std::make_shared<const Matrix>(std::move(out));
  if (!track) return Tensor(value, -1, nullptr);

  Tape::Node node;
  node.op = op;
  node.a = a;
  node.b = b;
  node.attr0 = attr0;
  node.attr1 = attr1;
  Tensor result(value, static_cast<int>(tape->nodes_.size()), tape);
  node.out = result;
  tape->nodes_.push_back(std::move(node));
  return result;
}

Tensor Tape::leaf(const Matrix& value) {
  if (!value.allFinite()) throw NumericError("leaf: non-finite value");
  if (g_active_tape != this) throw ContractError("leaf: tape is not active");
  Node node;
  node.op = kLeaf;
  Tensor result(std::make_shared<const Matrix>(value), static_cast<int>(nodes_.size()), this);
  node.out = result;
  nodes_.push_back(std::move(node));
  return result;
}

TapeScope::TapeScope() : previous_(g_active_tape) { g_active_tape = &tape_; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// ---- forward ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  return detail_record(kMatmul, a, b, 0, 0, a.v() * b.v());
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return detail_record(kAdd, a, b, 0, 0, a.v() + b.v());
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix out = a.v().rowwise() + b.v().row(0);
    return detail_record(kAdd, a, b, 0, 0, std::move(out));
  }
  if (b.cols() == 1 && b.rows() == a.rows()) {
    Matrix out = a.v().colwise() + b.v().col(0);
    return detail_record(kAdd, a, b, 0, 0, std::move(out));
  }
  if (a.rows() == 1 && a.cols() == b.cols()) return add(b, a);
  if (a.cols() == 1 && a.rows() == b.rows()) return add(b, a);
  shape_error("add", a, b);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  return detail_record(kSub, a, b, 0, 0, a.v() - b.v());
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  return detail_record(kMul, a, b, 0, 0, a.v().cwiseProduct(b.v()));
}

Tensor neg(const Tensor& x) { return detail_record(kNeg, x, Tensor(), 0, 0, -x.v()); }

Tensor exp(const Tensor& x) {
  return detail_record(kExp, x, Tensor(), 0, 0, x.v().array().exp().matrix());
}

Tensor square(const Tensor& x) {
  return detail_record(kSquare, x, Tensor(), 0, 0, x.v().cwiseProduct(x.v()));
}

Tensor sqrt(const Tensor& x) {
  return detail_record(kSqrt, x, Tensor(), 0, 0, x.v().cwiseSqrt());
}

Tensor reciprocal(const Tensor& x) {
  return detail_record(kReciprocal, x, Tensor(), 0, 0, x.v().cwiseInverse());
}

Tensor tanh(const Tensor& x) {
  return detail_record(kTanh, x, Tensor(), 0, 0, x.v().array().tanh().matrix());
}

Tensor elu(const Tensor& x) {
  Matrix out = x.v().unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  return detail_record(kElu, x, Tensor(), 0, 0, std::move(out));
}

Tensor maximum(const Tensor& x, double threshold) {
  return detail_record(kMaximum, x, Tensor(), threshold, 0, x.v().cwiseMax(threshold));
}

Tensor scale(const Tensor& x, double factor) {
  return detail_record(kScale, x, Tensor(), factor, 0, x.v() * factor);
}

Tensor add_scalar(const Tensor& x, double addend) {
  return detail_record(kAddScalar, x, Tensor(), addend, 0, (x.v().array() + addend).matrix());
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.v().sum();
  return detail_record(kSum, x, Tensor(), 0, 0, std::move(out));
}

Tensor mean(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.v().mean();
  return detail_record(kMean, x, Tensor(), 0, 0, std::move(out));
}

Tensor transpose(const Tensor& x) {
  return detail_record(kTranspose, x, Tensor(), 0, 0, x.v().transpose());
}

Tensor broadcast(const Tensor& x, Eigen::Index rows, Eigen::Index cols) {
  if (x.rows() != 1 || x.cols() != 1) {
    throw DimensionError("broadcast: input must be a scalar, got " + shape_of(x));
  }
  Matrix out = Matrix::Constant(rows, cols, x.v()(0, 0));
  return detail_record(kBroadcast, x, Tensor(), 0, 0, std::move(out));
}

Tensor slice_rows(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " +
                         std::to_string(x.rows()) + " rows");
  }
  Matrix out = x.v().middleRows(begin, count);
  return detail_record(kSliceRows, x, Tensor(), static_cast<double>(begin), 0, std::move(out));
}

Tensor pad_rows(const Tensor& x, Eigen::Index begin, Eigen::Index total) {
  if (begin < 0 || begin + x.rows() > total) {
    throw DimensionError("pad_rows: block does not fit the padded shape");
  }
  Matrix out = Matrix::Zero(total, x.cols());
  out.middleRows(begin, x.rows()) = x.v();
  return detail_record(kPadRows, x, Tensor(), static_cast<double>(begin), 0, std::move(out));
}

Tensor pairwise_sqdist(const Tensor& x, const Tensor& y) {
  if (x.cols() != y.cols()) shape_error("pairwise_sqdist", x, y);
  const Eigen::VectorXd xs = x.v().rowwise().squaredNorm();
  const Eigen::VectorXd ys = y.v().rowwise().squaredNorm();
  Matrix out = (-2.0 * (x.v() * y.v().transpose())).rowwise() + ys.transpose();
  out.colwise() += xs;
  out = out.cwiseMax(0.0);  // clamp round-off below zero
  return detail_record(kPairwiseSqdist, x, y, 0, 0, std::move(out));
}

// ---- backward ----

namespace {

Tensor ones_const(Eigen::Index rows, Eigen::Index cols) {
  return Tensor::constant(Matrix::Ones(rows, cols));
}

void accumulate(Tensor& slot, const Tensor& grad) {
  slot = slot.defined() ? add(slot, grad) : grad;
}

}  // namespace

// Adjoint rules are expressed through the primitive ops above, so with
// track_graph the gradients land back on the tape and stay differentiable.
std::vector<Tensor> Tape::backward(const Tensor& loss, const std::vector<Tensor>& targets,
                                   bool track_graph) {
  if (!loss.tracked() || loss.owner() != this) {
    throw ContractError("backward: loss is not tracked on this tape");
  }
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + shape_of(loss));
  }
  for (const auto& t : targets) {
    if (!t.tracked() || t.owner() != this) {
      throw ContractError("backward: target is not tracked on this tape");
    }
  }

  const int root = loss.node();
  std::vector<Tensor> adjoint(static_cast<std::size_t>(root) + 1);
  adjoint[static_cast<std::size_t>(root)] = Tensor::scalar(1.0);

  auto run = [&]() {
    for (int i = root; i >= 0; --i) {
      Tensor g = adjoint[static_cast<std::size_t>(i)];
      if (!g.defined()) continue;
      // Copy, not reference: tracked adjoint ops append to nodes_ and may
      // reallocate it mid-iteration.
      const Node node = nodes_[static_cast<std::size_t>(i)];
      auto push = [&](const Tensor& parent, const Tensor& grad) {
        if (!parent.defined() || !parent.tracked()) return;
        accumulate(adjoint[static_cast<std::size_t>(parent.node())], grad);
      };
      const Tensor& a = node.a;
      const Tensor& b = node.b;
      switch (node.op) {
        case kLeaf:
          break;
        case kMatmul:
          push(a, matmul(g, transpose(b)));
          push(b, matmul(transpose(a), g));
          break;
        case kAdd: {
          auto reduce_to = [&](const Tensor& operand) -> Tensor {
            Tensor r = g;
            if (operand.rows() == 1 && g.rows() != 1) r = matmul(ones_const(1, g.rows()), r);
            if (operand.cols() == 1 && g.cols() != 1) r = matmul(r, ones_const(g.cols(), 1));
            return r;
          };
          push(a, reduce_to(a));
          push(b, reduce_to(b));
          break;
        }
        case kSub:
          push(a, g);
          push(b, neg(g));
          break;
        case kMul:
          push(a, mul(g, b));
          push(b, mul(g, a));
          break;
        case kNeg:
          push(a, neg(g));
          break;
        case kExp:
          push(a, mul(g, node.out));
          break;
        case kSquare:
          push(a, scale(mul(g, a), 2.0));
          break;
        case kSqrt:
          push(a, scale(mul(g, reciprocal(node.out)), 0.5));
          break;
        case kReciprocal:
          push(a, neg(mul(g, square(node.out))));
          break;
        case kTanh:
          push(a, mul(g, add_scalar(neg(square(node.out)), 1.0)));
          break;
        case kElu: {
          // d/dx = 1 for x > 0, exp(x) = out + 1 otherwise; masks are
          // piecewise constant, so treating them as constants is exact a.e.
          Matrix pos = (a.v().array() > 0.0).cast<double>();
          Tensor pos_mask = Tensor::constant(pos);
          Tensor neg_mask = Tensor::constant(Matrix::Ones(a.rows(), a.cols()) - pos);
          push(a, mul(g, add(pos_mask, mul(neg_mask, add_scalar(node.out, 1.0)))));
          break;
        }
        case kMaximum: {
          Matrix mask = (a.v().array() > node.attr0).cast<double>();
          push(a, mul(g, Tensor::constant(std::move(mask))));
          break;
        }
        case kScale:
          push(a, scale(g, node.attr0));
          break;
        case kAddScalar:
          push(a, g);
          break;
        case kSum:
          push(a, broadcast(g, a.rows(), a.cols()));
          break;
        case kMean:
          push(a, broadcast(scale(g, 1.0 / static_cast<double>(a.rows() * a.cols())),
                            a.rows(), a.cols()));
          break;
        case kTranspose:
          push(a, transpose(g));
          break;
        case kBroadcast:
          push(a, sum(g));
          break;
        case kSliceRows:
          push(a, pad_rows(g, static_cast<Eigen::Index>(node.attr0), a.rows()));
          break;
        case kPadRows:
          push(a, slice_rows(g, static_cast<Eigen::Index>(node.attr0), a.rows()));
          break;
        case kPairwiseSqdist: {
          const Tensor gt = transpose(g);
          const Tensor row_tot = matmul(matmul(g, ones_const(g.cols(), 1)), ones_const(1, a.cols()));
          const Tensor col_tot = matmul(matmul(gt, ones_const(g.rows(), 1)), ones_const(1, b.cols()));
          push(a, scale(sub(mul(a, row_tot), matmul(g, b)), 2.0));
          push(b, scale(sub(mul(b, col_tot), matmul(gt, a)), 2.0));
          break;
        }
        default:
          throw ContractError("backward: unknown op");
      }
    }
  };

  if (track_graph) {
    run();
  } else {
    SuppressRecording guard;
    run();
  }

  std::vector<Tensor> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    Tensor g = adjoint[static_cast<std::size_t>(t.node())];
    if (!g.defined()) g = Tensor::constant(Matrix::Zero(t.rows(), t.cols()));
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Matrix> Tape::gradients(const Tensor& loss, const std::vector<Tensor>& targets) {
  std::vector<Tensor> grads = backward(loss, targets, /*track_graph=*/false);
  std::vector<Matrix> out;
  out.reserve(grads.size());
  for (auto& g : grads) out.push_back(g.v());
  return out;
}

std::vector<Tensor> Tape::gradients_tracked(const Tensor& loss,
                                            const std::vector<Tensor>& targets) {
  return backward(loss, targets, /*track_graph=*/true);
}

}  // namespace mmdforge

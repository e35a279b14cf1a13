#include "msrl/autodiff.hpp"

#include "msrl/errors.hpp"

namespace msrl::ad {

namespace {
void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": shape mismatch");
}
void check_column(const Mat& a, const char* op) {
  if (a.cols() != 1) throw ValidationError(std::string(op) + ": expected a column vector");
}
}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Mat value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(const Mat& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) - value(b);
  return push(std::move(n));
}

Var Tape::scale(Var a, double k) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.k = k;
  n.value = k * value(a);
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double k) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a.id;
  n.k = k;
  n.value = value(a).array() + k;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ValidationError("matmul: inner dimension mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) * value(b);
  return push(std::move(n));
}

Var Tape::matmul_ta(Var a, Var b) {
  if (value(a).rows() != value(b).rows())
    throw ValidationError("matmul_ta: inner dimension mismatch");
  Node n;
  n.op = Op::kMatMulTA;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a).transpose() * value(b);
  return push(std::move(n));
}

Var Tape::cwise_mul(Var a, Mat mask) {
  check_same_shape(value(a), mask, "cwise_mul");
  Node n;
  n.op = Op::kCwiseMul;
  n.a = a.id;
  n.value = value(a).cwiseProduct(mask);
  n.aux = std::move(mask);
  return push(std::move(n));
}

Var Tape::tanh_of(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.value = value(a).array().tanh();
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.value = value(a).cwiseMax(0.0);
  return push(std::move(n));
}

Var Tape::cwise_max(Var a, Var b) {
  check_same_shape(value(a), value(b), "cwise_max");
  Node n;
  n.op = Op::kCwiseMax;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a).cwiseMax(value(b));
  return push(std::move(n));
}

Var Tape::softmax(Var logits) {
  check_column(value(logits), "softmax");
  Node n;
  n.op = Op::kSoftmax;
  n.a = logits.id;
  const Mat& x = value(logits);
  Mat shifted = x.array() - x.maxCoeff();
  Mat e = shifted.array().exp();
  n.value = e / e.sum();
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  check_column(value(a), "dot");
  check_column(value(b), "dot");
  check_same_shape(value(a), value(b), "dot");
  Node n;
  n.op = Op::kDot;
  n.a = a.id;
  n.b = b.id;
  n.value = Mat::Constant(1, 1, value(a).col(0).dot(value(b).col(0)));
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  n.value = Mat::Constant(1, 1, value(a).sum());
  return push(std::move(n));
}

Var Tape::vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("vstack: no parts");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ValidationError("vstack: column mismatch");
    rows += value(p).rows();
  }
  Node n;
  n.op = Op::kVStack;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    n.value.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
    n.list.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::hstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("hstack: no parts");
  Eigen::Index cols = 0;
  const Eigen::Index rows = value(parts[0]).rows();
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ValidationError("hstack: row mismatch");
    cols += value(p).cols();
  }
  Node n;
  n.op = Op::kHStack;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    n.value.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
    n.list.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::broadcast_cols(Var column, int cols) {
  check_column(value(column), "broadcast_cols");
  Node n;
  n.op = Op::kBroadcastCols;
  n.a = column.id;
  n.value = value(column).col(0).replicate(1, cols);
  return push(std::move(n));
}

Var Tape::l2_normalize(Var column) {
  check_column(value(column), "l2_normalize");
  const double norm = value(column).col(0).norm();
  if (norm < 1e-12) throw ValidationError("l2_normalize: degenerate (near-zero) vector");
  Node n;
  n.op = Op::kL2Normalize;
  n.a = column.id;
  n.value = value(column) / norm;
  n.aux = Mat::Constant(1, 1, norm);
  return push(std::move(n));
}

const Mat& Tape::value(Var v) const {
  if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size()))
    throw ValidationError("tape: invalid var");
  return nodes_[v.id].value;
}

double Tape::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw ValidationError("tape: scalar() on non-scalar");
  return m(0, 0);
}

Mat& Tape::grad_slot(std::int32_t id) {
  Mat& g = grads_[id];
  if (g.size() == 0) g = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
  return g;
}

void Tape::backward(Var root) {
  if (backward_done_) throw RuntimeFailure("tape: backward already ran");
  backward_done_ = true;
  const Mat& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) throw ValidationError("backward: root must be scalar");
  grads_.assign(nodes_.size(), Mat());
  grad_slot(root.id)(0, 0) = 1.0;

  for (std::int32_t id = static_cast<std::int32_t>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& n = nodes_[id];
    const Mat& g = grads_[id];
    if (g.size() == 0) continue;  // not reachable from root
    switch (n.op) {
      case Op::kConstant:
      case Op::kLeaf:
        break;
      case Op::kAdd:
        grad_slot(n.a) += g;
        grad_slot(n.b) += g;
        break;
      case Op::kSub:
        grad_slot(n.a) += g;
        grad_slot(n.b) -= g;
        break;
      case Op::kScale:
        grad_slot(n.a) += n.k * g;
        break;
      case Op::kAddScalar:
        grad_slot(n.a) += g;
        break;
      case Op::kMatMul:
        grad_slot(n.a) += g * nodes_[n.b].value.transpose();
        grad_slot(n.b) += nodes_[n.a].value.transpose() * g;
        break;
      case Op::kMatMulTA:
        grad_slot(n.a) += nodes_[n.b].value * g.transpose();
        grad_slot(n.b) += nodes_[n.a].value * g;
        break;
      case Op::kCwiseMul:
        grad_slot(n.a) += g.cwiseProduct(n.aux);
        break;
      case Op::kTanh:
        grad_slot(n.a) += g.cwiseProduct(Mat(1.0 - n.value.array().square()));
        break;
      case Op::kRelu:
        grad_slot(n.a) +=
            g.cwiseProduct(Mat((nodes_[n.a].value.array() > 0.0).cast<double>()));
        break;
      case Op::kCwiseMax: {
        const Mat pick_a = (nodes_[n.a].value.array() >= nodes_[n.b].value.array()).cast<double>();
        grad_slot(n.a) += g.cwiseProduct(pick_a);
        grad_slot(n.b) += g.cwiseProduct(Mat(1.0 - pick_a.array()));
        break;
      }
      case Op::kSoftmax: {
        const Mat& y = n.value;
        const double inner = (y.array() * g.array()).sum();
        grad_slot(n.a) += Mat(y.array() * (g.array() - inner));
        break;
      }
      case Op::kDot: {
        const double gs = g(0, 0);
        grad_slot(n.a) += gs * nodes_[n.b].value;
        grad_slot(n.b) += gs * nodes_[n.a].value;
        break;
      }
      case Op::kSum:
        grad_slot(n.a).array() += g(0, 0);
        break;
      case Op::kVStack: {
        Eigen::Index at = 0;
        for (std::int32_t part : n.list) {
          const Eigen::Index r = nodes_[part].value.rows();
          grad_slot(part) += g.middleRows(at, r);
          at += r;
        }
        break;
      }
      case Op::kHStack: {
        Eigen::Index at = 0;
        for (std::int32_t part : n.list) {
          const Eigen::Index c = nodes_[part].value.cols();
          grad_slot(part) += g.middleCols(at, c);
          at += c;
        }
        break;
      }
      case Op::kBroadcastCols:
        grad_slot(n.a) += g.rowwise().sum();
        break;
      case Op::kL2Normalize: {
        const double norm = n.aux(0, 0);
        const Mat& y = n.value;
        const double inner = y.col(0).dot(g.col(0));
        grad_slot(n.a) += (g - inner * y) / norm;
        break;
      }
    }
  }
}

const Mat& Tape::gradient(Var v) {
  if (!backward_done_) throw RuntimeFailure("tape: gradient() before backward()");
  if (!v.valid()) throw ValidationError("tape: invalid var");
  if (grads_[v.id].size() == 0) {
    // Node never reached by the root: gradient is identically zero.
    grads_[v.id] = Mat::Zero(nodes_[v.id].value.rows(), nodes_[v.id].value.cols());
  }
  return grads_[v.id];
}

}  // namespace msrl::ad

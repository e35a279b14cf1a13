#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace msrl::ad {

using Mat = Eigen::MatrixXd;

// Handle into a Tape. Default-constructed handles are invalid.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Dense reverse-mode tape over Eigen matrices (double precision).
//
// A tape lives for one forward/backward pass: register parameter leaves,
// compose the forward value, call backward() on a scalar root, then read
// the accumulated leaf gradients. Shapes are checked at construction time;
// column vectors are n x 1 matrices.
class Tape {
 public:
  Var constant(Mat value);
  Var leaf(const Mat& value);  // gradient-tracked input

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double k);
  Var add_scalar(Var a, double k);
  Var matmul(Var a, Var b);     // A * B
  Var matmul_ta(Var a, Var b);  // A^T * B
  Var cwise_mul(Var a, Mat mask);
  Var tanh_of(Var a);
  Var relu(Var a);              // elementwise max(0, x)
  Var cwise_max(Var a, Var b);  // ties route the gradient to a
  Var softmax(Var logits);      // column vector, numerically stabilized
  Var dot(Var a, Var b);        // column vectors -> 1x1
  Var sum(Var a);               // all elements -> 1x1
  Var vstack(const std::vector<Var>& parts);         // concat rows
  Var hstack(const std::vector<Var>& parts);         // concat cols
  Var broadcast_cols(Var column, int cols);          // n x 1 -> n x cols
  Var l2_normalize(Var column);  // throws on (near-)zero norm

  const Mat& value(Var v) const;
  double scalar(Var v) const;

  // Accumulates d(root)/d(node) for every node reachable from root.
  // root must be 1x1. May be called once per tape.
  void backward(Var root);
  const Mat& gradient(Var v);  // zero matrix if the node was not reached

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConstant, kLeaf, kAdd, kSub, kScale, kAddScalar, kMatMul, kMatMulTA,
    kCwiseMul, kTanh, kRelu, kCwiseMax, kSoftmax, kDot, kSum, kVStack,
    kHStack, kBroadcastCols, kL2Normalize,
  };
  struct Node {
    Op op;
    std::int32_t a = -1, b = -1;
    std::vector<std::int32_t> list;  // stack inputs
    double k = 0;
    Mat value;
    Mat aux;  // op-specific (masks, cached norms)
  };

  Var push(Node node);
  Mat& grad_slot(std::int32_t id);

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  bool backward_done_ = false;
};

}  // namespace msrl::ad

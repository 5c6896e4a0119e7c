#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mgm/mat.hpp"

namespace mgm {

// Reverse-mode automatic differentiation on an explicit tape.
//
// A Graph owns a growing list of nodes; each operation evaluates eagerly and,
// when any input participates in differentiation, records a node.  backward()
// emits the vector-Jacobian products *as tape operations*, so a gradient is
// itself a differentiable tensor and backward can be applied to expressions
// built from gradients (the gradient penalty needs exactly this).
//
// Graphs are single-owner units: a graph and its tensors are only ever touched
// from one thread, and training code rebuilds the graph per minibatch.

struct Shape {
  long rows = 0;
  long cols = 0;

  long count() const { return rows * cols; }
  bool operator==(const Shape& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  std::string str() const;
};

namespace detail {
struct OpAccess;
}

class Graph;

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return values_ != nullptr; }
  const Shape& shape() const { return shape_; }
  const std::vector<double>& values() const { return *values_; }
  double scalar() const;
  Mat to_mat() const;

  // True when the tensor is connected to a graph node that participates in
  // differentiation.
  bool tracked() const { return node_ >= 0; }
  Graph* graph() const { return graph_; }
  int node() const { return node_; }

  static Tensor constant(Mat m);
  static Tensor constant_scalar(double x);

 private:
  friend class Graph;
  friend struct detail::OpAccess;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
  Graph* graph_ = nullptr;
  int node_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // A leaf holds externally supplied values.  requires_grad controls whether
  // gradients can be accumulated for it; without it the tensor stays a plain
  // constant.
  Tensor leaf(const Mat& m, bool requires_grad = true);

  // Gradient of a scalar loss with respect to each tensor in wrt.  With
  // create_graph the returned gradients are tracked tensors on this graph and
  // can be differentiated again.  A wrt tensor the loss does not depend on
  // yields a zero tensor of matching shape.
  std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> wrt,
                               bool create_graph = false);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct detail::OpAccess;

  enum class Op : std::uint8_t {
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kScalarMul,
    kAddScalar,
    kMatMul,
    kTranspose,
    kLeakyRelu,
    kLeakyBackward,
    kSquare,
    kSqrt,
    kHalfRecipClamp,
    kHalfRecipClampDeriv,
    kMean,
    kSumAll,
    kBroadcastScalar,
    kSumRows,
    kExpandCols,
    kSumCols,
    kExpandRows,
    kAddRowBias,
    kConcatCols,
    kSliceCols,
    kPadCols,
  };

  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    Shape shape;
    std::shared_ptr<const std::vector<double>> values;
    double c = 0.0;  // scalar operand or activation slope
    long i0 = 0;     // slice/pad offset or expansion size
    long i1 = 0;
    bool grad = false;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;
};

// Elementwise and structural operations.  Shape preconditions throw
// std::invalid_argument naming both offending shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor sum_rows(const Tensor& a);
Tensor sum_cols(const Tensor& a);
Tensor expand_cols(const Tensor& a, long n);
Tensor expand_rows(const Tensor& a, long m);
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, long start, long len);

// Euclidean norm of each row, as an m x 1 tensor.  The derivative is guarded:
// the norm is clamped below by 1e-12 in the backward pass only, so a zero row
// yields a zero gradient instead of NaN.
Tensor l2_norm_rows(const Tensor& a);

}  // namespace mgm

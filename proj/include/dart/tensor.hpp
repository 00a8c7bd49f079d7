#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace dart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into parents. Null for leaves.
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

}  // namespace detail

/// Dense 2-D value with an optional gradient slot.
///
/// Tensors are cheap handles onto a shared node; copying a Tensor aliases the
/// same storage. Operations that involve at least one requires_grad input
/// record a backward closure, so the graph is rebuilt on every forward pass.
/// Vectors are represented as n×1 or 1×n matrices.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor variable(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v, bool requires_grad = false);

  [[nodiscard]] const Matrix& value() const { return node_->value; }
  /// Mutable access for optimizers and initializers; never call mid-graph.
  [[nodiscard]] Matrix& mutable_value() { return node_->value; }

  [[nodiscard]] bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient, or a zero matrix of the value's shape when none has been accumulated.
  [[nodiscard]] Matrix grad() const;
  void zero_grad();

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  [[nodiscard]] Index rows() const { return node_->value.rows(); }
  [[nodiscard]] Index cols() const { return node_->value.cols(); }
  [[nodiscard]] Index size() const { return node_->value.size(); }
  [[nodiscard]] std::vector<Index> shape() const { return {rows(), cols()}; }

  /// Value of a 1×1 tensor.
  [[nodiscard]] double item() const;

  /// Same value, cut from the graph (stop-gradient).
  [[nodiscard]] Tensor detach() const { return Tensor(node_->value, false); }

  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ, the usual row-feature projection X·Wᵀ.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor abs(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Σ weights ⊙ a with constant weights; a scalar.
Tensor weighted_sum(const Tensor& a, const Matrix& weights);

// Activations.
Tensor sigmoid(const Tensor& a);
/// log σ(x), evaluated as −softplus(−x).
Tensor log_sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor relu(const Tensor& a);

/// Max-stabilized softmax. axis 0 normalizes each column, axis 1 each row.
Tensor softmax(const Tensor& a, int axis);

// Row-wise feature ops.
/// Zero-mean, unit-variance per row, no affine.
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);
/// Unit L2 norm per row; all-zero rows map to zero rows.
Tensor normalize_rows(const Tensor& a);
/// Per-row inner product of two equally shaped matrices, n×1.
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Multiplies row i of a by w(i); w is n×1.
Tensor scale_rows(const Tensor& a, const Tensor& w);

// Structural ops.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
/// Sums row e of a into output row segment[e].
Tensor segment_sum_rows(const Tensor& a, std::span<const Index> segment, Index num_segments);
/// Softmax of an E×1 column independently within each segment.
Tensor segment_softmax(const Tensor& scores, std::span<const Index> segment, Index num_segments);

/// Depthwise 2-D convolution with zero padding.
///
/// `x` holds an H×W×d grid as (H·W)×d, row index h·W + w. `kernel` holds one
/// kh×kw filter per channel as (kh·kw)×d, row index u·kw + v. Output keeps H×W.
Tensor depthwise_conv2d(const Tensor& x, Index height, Index width, const Tensor& kernel,
                        Index kernel_h, Index kernel_w);

/// softmax(Q·Kᵀ/√d)·V.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Indices of the k largest entries, descending, ties to the lower index.
/// Operates on plain values so no gradient path exists through the selection.
std::vector<Index> topk_indices(std::span<const double> values, Index k);
std::vector<Index> topk_indices(const Vector& values, Index k);

/// Reverse-mode accumulation from a 1×1 loss. Leaf gradients accumulate
/// across calls until zero_grad.
void backward(const Tensor& loss);

}  // namespace dart

#include "dart/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dart/error.hpp"

namespace dart {

namespace detail {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

Tensor make_result(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const NodePtr& p) { return p->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor::from_node(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
  }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax of one contiguous vector view, in place semantics on `out`.
template <typename In, typename Out>
void softmax_vec(const In& in, Out out) {
  const double m = in.maxCoeff();
  double total = 0.0;
  for (Index i = 0; i < in.size(); ++i) {
    out(i) = std::exp(in(i) - m);
    total += out(i);
  }
  for (Index i = 0; i < in.size(); ++i) {
    out(i) /= total;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor handle

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Matrix Tensor::grad() const {
  if (!has_grad()) {
    return Matrix::Zero(rows(), cols());
  }
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_str(value()));
  }
  return value()(0, 0);
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.value()) + " x " +
                         shape_str(b.value()));
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(an->value * bn->value, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a.value()) +
                         " x " + shape_str(b.value()) + "^T");
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(an->value * bn->value.transpose(), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad * bn->value);
    if (bn->requires_grad) bn->accumulate(self.grad.transpose() * an->value);
  });
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  return make_result(an->value.transpose(), {an},
                     [an](Node& self) { an->accumulate(self.grad.transpose()); });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto an = a.node();
  auto bn = b.node();
  return make_result(an->value + bn->value, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad);
    if (bn->requires_grad) bn->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto an = a.node();
  auto bn = b.node();
  return make_result(an->value - bn->value, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad);
    if (bn->requires_grad) bn->accumulate(-self.grad);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  auto an = a.node();
  auto bn = b.node();
  return make_result(an->value.cwiseProduct(bn->value), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->accumulate(self.grad.cwiseProduct(an->value));
  });
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return make_result(an->value * s, {an}, [an, s](Node& self) { an->accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  auto an = a.node();
  return make_result(an->value.array() + s, {an},
                     [an](Node& self) { an->accumulate(self.grad); });
}

Tensor abs(const Tensor& a) {
  auto an = a.node();
  return make_result(an->value.cwiseAbs(), {an}, [an](Node& self) {
    const Matrix sign = an->value.unaryExpr([](double x) {
      return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
    });
    an->accumulate(self.grad.cwiseProduct(sign));
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  auto an = a.node();
  Matrix out(1, 1);
  out(0, 0) = an->value.sum();
  return make_result(std::move(out), {an}, [an](Node& self) {
    an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  return scale(sum(a), 1.0 / n);
}

Tensor weighted_sum(const Tensor& a, const Matrix& weights) {
  if (weights.rows() != a.rows() || weights.cols() != a.cols()) {
    throw DimensionError("weighted_sum: weights " + shape_str(weights) + " vs " +
                         shape_str(a.value()));
  }
  auto an = a.node();
  Matrix out(1, 1);
  out(0, 0) = an->value.cwiseProduct(weights).sum();
  return make_result(std::move(out), {an}, [an, weights](Node& self) {
    an->accumulate(weights * self.grad(0, 0));
  });
}

// ---------------------------------------------------------------------------
// Activations

Tensor sigmoid(const Tensor& a) {
  auto an = a.node();
  Matrix y = an->value.unaryExpr([](double x) { return stable_sigmoid(x); });
  return make_result(y, {an}, [an, y](Node& self) {
    an->accumulate(self.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Tensor log_sigmoid(const Tensor& a) {
  auto an = a.node();
  Matrix y = an->value.unaryExpr([](double x) { return -softplus(-x); });
  return make_result(std::move(y), {an}, [an](Node& self) {
    const Matrix d = an->value.unaryExpr([](double x) { return stable_sigmoid(-x); });
    an->accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  auto an = a.node();
  Matrix y = an->value.unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return make_result(std::move(y), {an}, [an, slope](Node& self) {
    const Matrix d = an->value.unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    an->accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor softmax(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) {
    throw RangeError("softmax: axis must be 0 or 1, got " + std::to_string(axis));
  }
  if (a.value().hasNaN()) {
    throw InvalidValueError("softmax: NaN in input");
  }
  auto an = a.node();
  const Matrix& x = an->value;
  Matrix y(x.rows(), x.cols());
  if (axis == 0) {
    for (Index j = 0; j < x.cols(); ++j) softmax_vec(x.col(j), y.col(j));
  } else {
    for (Index i = 0; i < x.rows(); ++i) softmax_vec(x.row(i), y.row(i));
  }
  return make_result(y, {an}, [an, y, axis](Node& self) {
    const Matrix& g = self.grad;
    Matrix dx(y.rows(), y.cols());
    if (axis == 0) {
      for (Index j = 0; j < y.cols(); ++j) {
        const double dot = g.col(j).dot(y.col(j));
        dx.col(j) = y.col(j).cwiseProduct((g.col(j).array() - dot).matrix());
      }
    } else {
      for (Index i = 0; i < y.rows(); ++i) {
        const double dot = g.row(i).dot(y.row(i));
        dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
      }
    }
    an->accumulate(dx);
  });
}

// ---------------------------------------------------------------------------
// Row-wise feature ops

Tensor layer_norm_rows(const Tensor& a, double eps) {
  auto an = a.node();
  const Matrix& x = an->value;
  const double n = static_cast<double>(x.cols());
  Matrix y(x.rows(), x.cols());
  Vector inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / n;
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  return make_result(y, {an}, [an, y, inv_std, n](Node& self) {
    const Matrix& g = self.grad;
    Matrix dx(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double gm = g.row(i).sum() / n;
      const double gy = g.row(i).dot(y.row(i)) / n;
      dx.row(i) = (g.row(i).array() - gm - y.row(i).array() * gy) * inv_std(i);
    }
    an->accumulate(dx);
  });
}

Tensor normalize_rows(const Tensor& a) {
  auto an = a.node();
  const Matrix& x = an->value;
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  Vector norms(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    norms(i) = x.row(i).norm();
    if (norms(i) > 0) y.row(i) = x.row(i) / norms(i);
  }
  return make_result(y, {an}, [an, y, norms](Node& self) {
    const Matrix& g = self.grad;
    Matrix dx = Matrix::Zero(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      if (norms(i) > 0) {
        dx.row(i) = (g.row(i) - y.row(i) * g.row(i).dot(y.row(i))) / norms(i);
      }
    }
    an->accumulate(dx);
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "row_dot");
  auto an = a.node();
  auto bn = b.node();
  Matrix out = an->value.cwiseProduct(bn->value).rowwise().sum();
  return make_result(std::move(out), {an, bn}, [an, bn](Node& self) {
    const Vector g = self.grad.col(0);
    if (an->requires_grad) an->accumulate(g.asDiagonal() * bn->value);
    if (bn->requires_grad) bn->accumulate(g.asDiagonal() * an->value);
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  if (w.cols() != 1 || w.rows() != a.rows()) {
    throw DimensionError("scale_rows: weights " + shape_str(w.value()) + " for " +
                         shape_str(a.value()));
  }
  auto an = a.node();
  auto wn = w.node();
  Matrix out = wn->value.col(0).asDiagonal() * an->value;
  return make_result(std::move(out), {an, wn}, [an, wn](Node& self) {
    if (an->requires_grad) an->accumulate(wn->value.col(0).asDiagonal() * self.grad);
    if (wn->requires_grad) wn->accumulate(self.grad.cwiseProduct(an->value).rowwise().sum());
  });
}

// ---------------------------------------------------------------------------
// Structural ops

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
  }
  auto an = a.node();
  auto bn = b.node();
  Matrix out(a.rows(), a.cols() + b.cols());
  out << an->value, bn->value;
  const Index ac = a.cols();
  const Index bc = b.cols();
  return make_result(std::move(out), {an, bn}, [an, bn, ac, bc](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad.leftCols(ac));
    if (bn->requires_grad) bn->accumulate(self.grad.rightCols(bc));
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column counts differ " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
  }
  auto an = a.node();
  auto bn = b.node();
  Matrix out(a.rows() + b.rows(), a.cols());
  out << an->value, bn->value;
  const Index ar = a.rows();
  const Index br = b.rows();
  return make_result(std::move(out), {an, bn}, [an, bn, ar, br](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad.topRows(ar));
    if (bn->requires_grad) bn->accumulate(self.grad.bottomRows(br));
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw RangeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") outside " + shape_str(a.value()));
  }
  auto an = a.node();
  return make_result(an->value.middleRows(start, count), {an}, [an, start, count](Node& self) {
    Matrix g = Matrix::Zero(an->value.rows(), an->value.cols());
    g.middleRows(start, count) = self.grad;
    an->accumulate(g);
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw RangeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") outside " + shape_str(a.value()));
  }
  auto an = a.node();
  return make_result(an->value.middleCols(start, count), {an}, [an, start, count](Node& self) {
    Matrix g = Matrix::Zero(an->value.rows(), an->value.cols());
    g.middleCols(start, count) = self.grad;
    an->accumulate(g);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  auto an = a.node();
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= a.rows()) {
      throw RangeError("gather_rows: index " + std::to_string(idx[e]) + " outside " +
                       shape_str(a.value()));
    }
    out.row(static_cast<Index>(e)) = an->value.row(idx[e]);
  }
  return make_result(std::move(out), {an}, [an, idx](Node& self) {
    Matrix g = Matrix::Zero(an->value.rows(), an->value.cols());
    for (std::size_t e = 0; e < idx.size(); ++e) {
      g.row(idx[e]) += self.grad.row(static_cast<Index>(e));
    }
    an->accumulate(g);
  });
}

Tensor segment_sum_rows(const Tensor& a, std::span<const Index> segment, Index num_segments) {
  if (static_cast<Index>(segment.size()) != a.rows()) {
    throw DimensionError("segment_sum_rows: " + std::to_string(segment.size()) +
                         " segment ids for " + shape_str(a.value()));
  }
  auto an = a.node();
  std::vector<Index> seg(segment.begin(), segment.end());
  Matrix out = Matrix::Zero(num_segments, a.cols());
  for (std::size_t e = 0; e < seg.size(); ++e) {
    if (seg[e] < 0 || seg[e] >= num_segments) {
      throw RangeError("segment_sum_rows: segment id " + std::to_string(seg[e]) + " out of range");
    }
    out.row(seg[e]) += an->value.row(static_cast<Index>(e));
  }
  return make_result(std::move(out), {an}, [an, seg](Node& self) {
    Matrix g(an->value.rows(), an->value.cols());
    for (std::size_t e = 0; e < seg.size(); ++e) {
      g.row(static_cast<Index>(e)) = self.grad.row(seg[e]);
    }
    an->accumulate(g);
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const Index> segment, Index num_segments) {
  if (scores.cols() != 1 || static_cast<Index>(segment.size()) != scores.rows()) {
    throw DimensionError("segment_softmax: expects E×1 scores with E segment ids, got " +
                         shape_str(scores.value()));
  }
  if (scores.value().hasNaN()) {
    throw InvalidValueError("segment_softmax: NaN in input");
  }
  auto sn = scores.node();
  std::vector<Index> seg(segment.begin(), segment.end());
  const Vector& x = sn->value.col(0);
  Vector seg_max = Vector::Constant(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < seg.size(); ++e) {
    seg_max(seg[e]) = std::max(seg_max(seg[e]), x(static_cast<Index>(e)));
  }
  Vector y(x.size());
  Vector seg_sum = Vector::Zero(num_segments);
  for (std::size_t e = 0; e < seg.size(); ++e) {
    const auto i = static_cast<Index>(e);
    y(i) = std::exp(x(i) - seg_max(seg[e]));
    seg_sum(seg[e]) += y(i);
  }
  for (std::size_t e = 0; e < seg.size(); ++e) {
    y(static_cast<Index>(e)) /= seg_sum(seg[e]);
  }
  Matrix out = y;
  return make_result(std::move(out), {sn}, [sn, seg, y, num_segments](Node& self) {
    const Vector g = self.grad.col(0);
    Vector dot = Vector::Zero(num_segments);
    for (std::size_t e = 0; e < seg.size(); ++e) {
      const auto i = static_cast<Index>(e);
      dot(seg[e]) += g(i) * y(i);
    }
    Matrix dx(y.size(), 1);
    for (std::size_t e = 0; e < seg.size(); ++e) {
      const auto i = static_cast<Index>(e);
      dx(i, 0) = y(i) * (g(i) - dot(seg[e]));
    }
    sn->accumulate(dx);
  });
}

// ---------------------------------------------------------------------------
// Depthwise convolution

Tensor depthwise_conv2d(const Tensor& x, Index height, Index width, const Tensor& kernel,
                        Index kernel_h, Index kernel_w) {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0 || kernel_h < 1 || kernel_w < 1) {
    throw ConfigError("depthwise_conv2d: kernel size must be odd, got " +
                      std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
  }
  if (x.rows() != height * width) {
    throw DimensionError("depthwise_conv2d: " + std::to_string(x.rows()) +
                         " rows do not form a " + std::to_string(height) + "x" +
                         std::to_string(width) + " grid");
  }
  if (kernel.rows() != kernel_h * kernel_w || kernel.cols() != x.cols()) {
    throw DimensionError("depthwise_conv2d: kernel " + shape_str(kernel.value()) +
                         " does not match " + std::to_string(kernel_h) + "x" +
                         std::to_string(kernel_w) + "x" + std::to_string(x.cols()));
  }
  auto xn = x.node();
  auto kn = kernel.node();
  const Index ph = kernel_h / 2;
  const Index pw = kernel_w / 2;
  const Matrix& xv = xn->value;
  const Matrix& kv = kn->value;
  Matrix out = Matrix::Zero(xv.rows(), xv.cols());
  for (Index h = 0; h < height; ++h) {
    for (Index w = 0; w < width; ++w) {
      for (Index u = 0; u < kernel_h; ++u) {
        const Index hh = h + u - ph;
        if (hh < 0 || hh >= height) continue;
        for (Index v = 0; v < kernel_w; ++v) {
          const Index ww = w + v - pw;
          if (ww < 0 || ww >= width) continue;
          out.row(h * width + w) += kv.row(u * kernel_w + v).cwiseProduct(xv.row(hh * width + ww));
        }
      }
    }
  }
  return make_result(std::move(out), {xn, kn},
                     [xn, kn, height, width, kernel_h, kernel_w, ph, pw](Node& self) {
    const Matrix& g = self.grad;
    const Matrix& xv = xn->value;
    const Matrix& kv = kn->value;
    Matrix dx = Matrix::Zero(xv.rows(), xv.cols());
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    for (Index h = 0; h < height; ++h) {
      for (Index w = 0; w < width; ++w) {
        const auto grow = g.row(h * width + w);
        for (Index u = 0; u < kernel_h; ++u) {
          const Index hh = h + u - ph;
          if (hh < 0 || hh >= height) continue;
          for (Index v = 0; v < kernel_w; ++v) {
            const Index ww = w + v - pw;
            if (ww < 0 || ww >= width) continue;
            const Index src = hh * width + ww;
            const Index tap = u * kernel_w + v;
            dx.row(src) += kv.row(tap).cwiseProduct(grow);
            dk.row(tap) += xv.row(src).cwiseProduct(grow);
          }
        }
      }
    }
    if (xn->requires_grad) xn->accumulate(dx);
    if (kn->requires_grad) kn->accumulate(dk);
  });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query width " + std::to_string(q.cols()) +
                         " != key width " + std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: " + std::to_string(k.rows()) + " keys but " +
                         std::to_string(v.rows()) + " values");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor weights = softmax(scale(matmul_nt(q, k), inv_sqrt_d), 1);
  return matmul(weights, v);
}

// ---------------------------------------------------------------------------
// Selection

std::vector<Index> topk_indices(std::span<const double> values, Index k) {
  const auto n = static_cast<Index>(values.size());
  if (k < 1 || k > n) {
    throw RangeError("topk_indices: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(n) + "]");
  }
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values[a] > values[b]; });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

std::vector<Index> topk_indices(const Vector& values, Index k) {
  return topk_indices(std::span<const double>(values.data(), values.size()), k);
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.value()));
  }
  const auto& root = loss.node();
  if (!root->requires_grad) {
    return;
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
  root->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) {
      n->backward_fn(*n);
    }
  }
}

}  // namespace dart

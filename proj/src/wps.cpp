#include "dart/wps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dart/error.hpp"

namespace dart {

namespace {

void check_labels(const Matrix& scores, const Labels& labels) {
  if (static_cast<Index>(labels.size()) != scores.cols()) {
    throw DimensionError("wps: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(scores.cols()) + " score columns");
  }
}

Matrix column_softmax_positive(const Matrix& scores, const Labels& labels, double tau) {
  if (!(tau > 0)) {
    throw RangeError("wps: temperature must be positive");
  }
  check_labels(scores, labels);
  Matrix z = Matrix::Zero(scores.rows(), scores.cols());
  for (Index c = 0; c < scores.cols(); ++c) {
    if (!labels[static_cast<std::size_t>(c)]) continue;
    const Vector logits = scores.col(c) / tau;
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp();
    z.col(c) = e / e.sum();
  }
  return z;
}

}  // namespace

Tensor patch_scores(const Tensor& features, const Matrix& text, std::vector<Index>* zero_rows) {
  if (features.cols() != text.cols()) {
    throw DimensionError("patch_scores: feature width " + std::to_string(features.cols()) +
                         " != text width " + std::to_string(text.cols()));
  }
  if (zero_rows != nullptr) {
    zero_rows->clear();
    for (Index i = 0; i < features.rows(); ++i) {
      if (features.value().row(i).squaredNorm() == 0.0) zero_rows->push_back(i);
    }
  }
  return matmul_nt(normalize_rows(features), Tensor::constant(text));
}

Matrix responsibilities_model(const Matrix& s_tilde, const Labels& labels, double tau) {
  return column_softmax_positive(s_tilde, labels, tau);
}

Matrix responsibilities_prior(const Matrix& s_star, const Labels& labels, double tau_prior) {
  return column_softmax_positive(s_star, labels, tau_prior);
}

Matrix smooth(const Matrix& z_model, const Matrix& z_prior, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw RangeError("smooth: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (z_model.rows() != z_prior.rows() || z_model.cols() != z_prior.cols()) {
    throw DimensionError("smooth: responsibility shapes differ");
  }
  // Endpoints are returned verbatim so λ ∈ {0, 1} reproduces its source bitwise.
  if (lambda == 1.0) return z_prior;
  if (lambda == 0.0) return z_model;
  return lambda * z_prior + (1.0 - lambda) * z_model;
}

Responsibilities compute_responsibilities(const Matrix& s_tilde, const Matrix& s_star,
                                          const Labels& labels, double tau, double tau_prior,
                                          double lambda) {
  Responsibilities r;
  r.lambda = lambda;
  r.z_model = responsibilities_model(s_tilde, labels, tau);
  r.z_prior = responsibilities_prior(s_star, labels, tau_prior);
  r.z_smooth = smooth(r.z_model, r.z_prior, lambda);
  return r;
}

double lambda_schedule(Index step, Index total_steps, const LambdaSchedule& schedule) {
  if (schedule.kind == LambdaSchedule::Kind::kConstant) {
    return std::clamp(schedule.constant, 0.0, 1.0);
  }
  if (total_steps <= 0) return 0.0;
  const double ramp = schedule.ramp_fraction * static_cast<double>(total_steps);
  if (ramp <= 0) return 0.0;
  const double s = static_cast<double>(std::clamp<Index>(step, 0, total_steps));
  return std::max(0.0, 1.0 - s / ramp);
}

HardNegatives hard_negative_indices(const Matrix& s_tilde, const Labels& labels, Index k) {
  check_labels(s_tilde, labels);
  HardNegatives out;
  out.per_class.resize(static_cast<std::size_t>(s_tilde.cols()));
  Index kk = std::max<Index>(k, 0);
  if (kk > s_tilde.rows()) {
    kk = s_tilde.rows();
    out.clamped = true;
  }
  if (kk == 0) return out;
  for (Index c = 0; c < s_tilde.cols(); ++c) {
    if (labels[static_cast<std::size_t>(c)]) continue;
    const Vector col = s_tilde.col(c);
    out.per_class[static_cast<std::size_t>(c)] = topk_indices(col, kk);
  }
  return out;
}

Tensor wps_loss(const Tensor& s_tilde, const Matrix& z_smooth, const Labels& labels,
                const HardNegatives& hard) {
  check_labels(s_tilde.value(), labels);
  const Index n = s_tilde.rows();
  const Index classes = s_tilde.cols();
  if (z_smooth.rows() != n || z_smooth.cols() != classes) {
    throw DimensionError("wps_loss: responsibility shape does not match scores");
  }
  Matrix pos_weight = Matrix::Zero(n, classes);
  Matrix neg_mask = Matrix::Zero(n, classes);
  bool any_pos = false;
  bool any_neg = false;
  for (Index c = 0; c < classes; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    if (labels[cu]) {
      pos_weight.col(c) = z_smooth.col(c);
      any_pos = true;
    } else if (cu < hard.per_class.size()) {
      for (Index j : hard.per_class[cu]) {
        neg_mask(j, c) = 1.0;
        any_neg = true;
      }
    }
  }
  Tensor loss = Tensor::scalar(0.0);
  if (any_pos) loss = sub(loss, weighted_sum(log_sigmoid(s_tilde), pos_weight));
  if (any_neg) loss = sub(loss, weighted_sum(log_sigmoid(scale(s_tilde, -1.0)), neg_mask));
  return loss;
}

Vector responsibility_entropy(const Matrix& z, const Labels& labels) {
  check_labels(z, labels);
  Vector h = Vector::Constant(z.cols(), std::numeric_limits<double>::quiet_NaN());
  for (Index c = 0; c < z.cols(); ++c) {
    if (!labels[static_cast<std::size_t>(c)]) continue;
    double e = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
      if (z(i, c) > 0) e -= z(i, c) * std::log(z(i, c));
    }
    h(c) = e;
  }
  return h;
}

}  // namespace dart

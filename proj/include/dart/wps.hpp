#pragma once

#include <cstdint>
#include <vector>

#include "dart/tensor.hpp"

namespace dart {

/// Image-level binary labels over the class vocabulary.
using Labels = std::vector<std::uint8_t>;

/// Patch-class cosine scores from adapted features (with gradient) and from
/// frozen features (plain values).
struct ScorePair {
  Tensor s_tilde;  // N_p×C
  Matrix s_star;   // N_p×C
};

struct Responsibilities {
  Matrix z_model;
  Matrix z_prior;
  Matrix z_smooth;
  double lambda = 1.0;
};

/// Cosine similarity between feature rows and (unit-norm) text rows, N_p×C.
/// Rows of `features` with zero norm score 0 and are reported in `zero_rows`.
Tensor patch_scores(const Tensor& features, const Matrix& text,
                    std::vector<Index>* zero_rows = nullptr);

/// Per positive class, softmax over patches of S/τ; negative columns are zero.
Matrix responsibilities_model(const Matrix& s_tilde, const Labels& labels, double tau);
Matrix responsibilities_prior(const Matrix& s_star, const Labels& labels, double tau_prior);

/// λ·z* + (1−λ)·z.
Matrix smooth(const Matrix& z_model, const Matrix& z_prior, double lambda);

Responsibilities compute_responsibilities(const Matrix& s_tilde, const Matrix& s_star,
                                          const Labels& labels, double tau, double tau_prior,
                                          double lambda);

struct LambdaSchedule {
  enum class Kind { kLinear, kConstant };
  Kind kind = Kind::kLinear;
  /// Used by kConstant.
  double constant = 0.5;
  /// Linear decays 1 → 0 over this fraction of training, then stays at 0.
  double ramp_fraction = 0.8;
};

double lambda_schedule(Index step, Index total_steps, const LambdaSchedule& schedule);

struct HardNegatives {
  /// Indexed by class; empty for positive classes.
  std::vector<std::vector<Index>> per_class;
  /// True when K exceeded N_p and was clamped.
  bool clamped = false;
};

/// For each negative class, the K patches with the highest score.
HardNegatives hard_negative_indices(const Matrix& s_tilde, const Labels& labels, Index k);

/// Weighted positive loss plus hard negative loss for one image.
Tensor wps_loss(const Tensor& s_tilde, const Matrix& z_smooth, const Labels& labels,
                const HardNegatives& hard);

/// Shannon entropy of each positive responsibility column (NaN for negatives).
Vector responsibility_entropy(const Matrix& z, const Labels& labels);

}  // namespace dart

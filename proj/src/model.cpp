#include "dart/model.hpp"

#include <algorithm>
#include <string>

#include "dart/error.hpp"
#include "dart/metrics.hpp"
#include "dart/random.hpp"

namespace dart {

namespace {

// Masked logits vanish under exp() without producing inf - inf.
constexpr double kMasked = -1e30;

}  // namespace

Tensor class_attentive_features(const Tensor& x_tilde, const Vector& global, const Tensor& s_tilde,
                                Index k_patch, double tau, const Tensor& w_g,
                                PatchSelection* selection) {
  const Index n = s_tilde.rows();
  const Index classes = s_tilde.cols();
  if (x_tilde.rows() != n) {
    throw DimensionError("class_attentive_features: " + std::to_string(x_tilde.rows()) +
                         " patch features for " + std::to_string(n) + " score rows");
  }
  if (global.size() != x_tilde.cols() || w_g.rows() != x_tilde.cols() || w_g.cols() != x_tilde.cols()) {
    throw DimensionError("class_attentive_features: global feature or W_g width mismatch");
  }
  if (k_patch < 1) throw RangeError("class_attentive_features: K_patch must be >= 1");
  if (!(tau > 0)) throw RangeError("class_attentive_features: temperature must be positive");
  const Index k = std::min(k_patch, n);

  PatchSelection local;
  PatchSelection& sel = selection ? *selection : local;
  if (sel.empty()) {
    sel.resize(static_cast<std::size_t>(classes));
    for (Index c = 0; c < classes; ++c) {
      const Vector col = s_tilde.value().col(c);
      sel[static_cast<std::size_t>(c)] = topk_indices(col, k);
    }
  } else if (static_cast<Index>(sel.size()) != classes) {
    throw DimensionError("class_attentive_features: selection covers the wrong class count");
  }

  Matrix mask = Matrix::Constant(n, classes, kMasked);
  for (Index c = 0; c < classes; ++c) {
    for (Index i : sel[static_cast<std::size_t>(c)]) mask(i, c) = 0.0;
  }
  const Tensor weights = softmax(add(scale(s_tilde, 1.0 / tau), Tensor::constant(mask)), 0);
  const Tensor pooled = matmul(transpose(weights), x_tilde);
  const Tensor g = matmul_nt(Tensor::constant(global.transpose()), w_g);
  return add(pooled, matmul(Tensor::constant(Matrix::Ones(classes, 1)), g));
}

Tensor predict(const Tensor& h_mm, const Matrix& text, std::vector<Index>* zero_rows) {
  if (h_mm.rows() != text.rows() || h_mm.cols() != text.cols()) {
    throw DimensionError("predict: class features and text embeddings differ in shape");
  }
  if (zero_rows != nullptr) {
    zero_rows->clear();
    for (Index c = 0; c < h_mm.rows(); ++c) {
      if (h_mm.value().row(c).squaredNorm() == 0.0) zero_rows->push_back(c);
    }
  }
  return row_dot(normalize_rows(h_mm), Tensor::constant(text));
}

DartModel::DartModel(const ModelConfig& cfg, Vocabulary vocab, ClassGraph graph)
    : cfg_(cfg), vocab_(std::move(vocab)), graph_(std::move(graph)), backbone_(cfg.backbone) {
  cfg_.validate();
  vocab_.validate();
  if (vocab_.embeddings.cols() != cfg_.backbone.d) {
    throw DimensionError("model: text width " + std::to_string(vocab_.embeddings.cols()) +
                         " != feature width " + std::to_string(cfg_.backbone.d));
  }
  if (graph_.num_classes != vocab_.size()) {
    throw DimensionError("model: graph has " + std::to_string(graph_.num_classes) + " classes, vocabulary " +
                         std::to_string(vocab_.size()));
  }
  graph_.validate();
  edges_ = graph_edges(graph_);

  Rng rng(mix_seed(cfg_.seed, 0xD0));
  if (cfg_.use_arm) arm_.emplace(cfg_.arm, backbone_, params_, rng);
  if (cfg_.use_atm) atm_.emplace(cfg_.atm, cfg_.backbone.d, params_, rng);
  w_g_ = params_.add("model/w_g", Matrix::Zero(cfg_.backbone.d, cfg_.backbone.d));
}

Tensor DartModel::text_features(AttentionTrace* trace) const {
  if (!atm_) return {};
  return text_atm(Tensor::constant(vocab_.embeddings), edges_, atm_->text_layers(), cfg_.atm.slope, trace);
}

ImageForward DartModel::forward(const BackboneOutput& frozen, const Tensor& h_txt,
                                const PatchSelection* selection, AttentionTrace* trace) const {
  ImageForward f;
  const Tensor x_orig = Tensor::constant(frozen.patches_final);
  Tensor x_tilde = x_orig;
  if (arm_) {
    ArmOutput out = arm_->adapt(frozen);
    x_tilde = out.adapted;
    f.delta = out.delta;
    f.has_delta = true;
  }
  f.s_tilde = patch_scores(x_tilde, vocab_.embeddings);
  f.s_star = arm_ ? patch_scores(x_orig, vocab_.embeddings).value() : f.s_tilde.value();
  if (selection) f.selection = *selection;
  f.x_vis = class_attentive_features(x_tilde, frozen.global, f.s_tilde, cfg_.k_patch, cfg_.tau, w_g_,
                                     &f.selection);
  if (atm_) {
    if (h_txt.rows() != vocab_.size()) throw ContractError("forward: missing Text-ATM features");
    const Tensor x_mm = fuse(f.x_vis, h_txt, atm_->fusion(), cfg_.atm.slope);
    f.h_mm = mm_atm(x_mm, edges_, atm_->mm_layers(), cfg_.atm.slope, trace);
  } else {
    f.h_mm = f.x_vis;
  }
  f.y_hat = predict(f.h_mm, vocab_.embeddings);
  return f;
}

Vector DartModel::scores(const BackboneOutput& frozen) const {
  return forward(frozen, text_features()).y_hat.value().col(0);
}

LossTerms total_loss(const DartModel& model, std::span<const BatchItem> batch, double lambda,
                     StepTargets* capture, const StepTargets* fixed) {
  const ModelConfig& cfg = model.config();
  if (batch.empty()) throw ContractError("total_loss: empty batch");
  if (fixed && (fixed->z_smooth.size() != batch.size() || fixed->hard.size() != batch.size() ||
                fixed->selection.size() != batch.size())) {
    throw ContractError("total_loss: fixed targets do not match the batch");
  }
  if (capture) *capture = StepTargets{};

  // Unseen classes are unknown at training time: they take part in message
  // passing but never in a loss term.
  std::vector<Index> seen;
  for (Index c = 0; c < model.vocab().size(); ++c) {
    if (model.vocab().seen_mask[static_cast<std::size_t>(c)]) seen.push_back(c);
  }
  const bool all_seen = static_cast<Index>(seen.size()) == model.vocab().size();

  const Tensor h_txt = model.text_features();
  Tensor clsf = Tensor::scalar(0.0);
  Tensor wps = Tensor::scalar(0.0);
  std::vector<Tensor> deltas;
  double abs_sum = 0.0;
  Index abs_count = 0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Labels& full_labels = *batch[b].labels;
    const ImageForward f =
        model.forward(*batch[b].frozen, h_txt, fixed ? &fixed->selection[b] : nullptr);
    Labels labels;
    Tensor y_hat = f.y_hat;
    Tensor s_tilde = f.s_tilde;
    Matrix s_star = f.s_star;
    if (all_seen) {
      labels = full_labels;
    } else {
      for (Index c : seen) labels.push_back(full_labels.at(static_cast<std::size_t>(c)));
      y_hat = gather_rows(y_hat, seen);
      s_tilde = transpose(gather_rows(transpose(s_tilde), seen));
      Matrix sub(s_star.rows(), static_cast<Index>(seen.size()));
      for (std::size_t k = 0; k < seen.size(); ++k) sub.col(static_cast<Index>(k)) = s_star.col(seen[k]);
      s_star = std::move(sub);
    }
    clsf = add(clsf, ranking_loss(y_hat, labels, cfg.margin));

    Matrix z;
    HardNegatives hard;
    if (fixed) {
      z = fixed->z_smooth[b];
      hard = fixed->hard[b];
    } else {
      z = compute_responsibilities(s_tilde.value(), s_star, labels, cfg.tau, cfg.tau_prior_value(), lambda)
              .z_smooth;
      hard = hard_negative_indices(s_tilde.value(), labels, cfg.k_hard);
    }
    wps = add(wps, wps_loss(s_tilde, z, labels, hard));
    if (capture) {
      capture->z_smooth.push_back(std::move(z));
      capture->hard.push_back(std::move(hard));
      capture->selection.push_back(f.selection);
    }
    if (f.has_delta) {
      abs_sum += f.delta.value().cwiseAbs().sum();
      abs_count += f.delta.size();
      deltas.push_back(f.delta);
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  LossTerms terms;
  const Tensor clsf_mean = scale(clsf, inv);
  const Tensor wps_mean = scale(wps, inv);
  const Tensor pen = penalty(deltas);
  terms.clsf = clsf_mean.item();
  terms.wps = wps_mean.item();
  terms.penalty = pen.item();
  terms.mean_abs_delta = abs_count > 0 ? abs_sum / static_cast<double>(abs_count) : 0.0;

  Tensor total = clsf_mean;
  if (cfg.gamma_wps != 0.0) total = add(total, scale(wps_mean, cfg.gamma_wps));
  if (cfg.gamma_penalty != 0.0 && !deltas.empty()) total = add(total, scale(pen, cfg.gamma_penalty));
  terms.total = total;
  return terms;
}

}  // namespace dart

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dart/arm.hpp"
#include "dart/atm.hpp"
#include "dart/backbone.hpp"
#include "dart/class_graph.hpp"
#include "dart/config.hpp"
#include "dart/dataset.hpp"
#include "dart/parameter.hpp"
#include "dart/wps.hpp"

namespace dart {

/// Per class, the patch indices feeding its class-attentive feature.
using PatchSelection = std::vector<std::vector<Index>>;

/// Per class c: softmax over its top-K patches of S̃/τ, weighted patch sum,
/// plus W_g·x̄. `selection` is filled when non-null and empty, reused when
/// already populated (the selection itself carries no gradient).
Tensor class_attentive_features(const Tensor& x_tilde, const Vector& global, const Tensor& s_tilde,
                                Index k_patch, double tau, const Tensor& w_g,
                                PatchSelection* selection = nullptr);

/// ŷ_c = cos(h_mm^(c), t_c); zero rows score 0 and are reported in `zero_rows`.
Tensor predict(const Tensor& h_mm, const Matrix& text, std::vector<Index>* zero_rows = nullptr);

struct ImageForward {
  Tensor s_tilde;  // N_p×C
  Matrix s_star;   // N_p×C
  Tensor delta;    // N_p×d; undefined when the ARM is disabled
  bool has_delta = false;
  Tensor x_vis;    // C×d
  Tensor h_mm;     // C×d
  Tensor y_hat;    // C×1
  PatchSelection selection;
};

class DartModel {
 public:
  DartModel(const ModelConfig& cfg, Vocabulary vocab, ClassGraph graph);

  DartModel(const DartModel&) = delete;
  DartModel& operator=(const DartModel&) = delete;

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const ClassGraph& graph() const { return graph_; }
  [[nodiscard]] const GraphEdges& edges() const { return edges_; }
  [[nodiscard]] const Backbone& backbone() const { return backbone_; }
  [[nodiscard]] ParameterSet& params() { return params_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }
  [[nodiscard]] const std::optional<Arm>& arm() const { return arm_; }
  [[nodiscard]] const std::optional<Atm>& atm() const { return atm_; }
  [[nodiscard]] const Matrix& text() const { return vocab_.embeddings; }

  [[nodiscard]] BackboneOutput encode(const Matrix& raw) const { return backbone_.encode(raw); }

  /// Text-ATM output; shared by every image of a step. Undefined without ATM.
  [[nodiscard]] Tensor text_features(AttentionTrace* trace = nullptr) const;

  [[nodiscard]] ImageForward forward(const BackboneOutput& frozen, const Tensor& h_txt,
                                     const PatchSelection* selection = nullptr,
                                     AttentionTrace* trace = nullptr) const;

  /// ŷ values for one image, no loss bookkeeping.
  [[nodiscard]] Vector scores(const BackboneOutput& frozen) const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  ClassGraph graph_;
  GraphEdges edges_;
  Backbone backbone_;
  ParameterSet params_;
  std::optional<Arm> arm_;
  std::optional<Atm> atm_;
  Tensor w_g_;  // d×d, zero at init
};

struct BatchItem {
  const BackboneOutput* frozen = nullptr;
  const Labels* labels = nullptr;
};

/// Stop-gradient quantities of one step. Captured on a forward pass and
/// optionally replayed so the loss becomes a smooth function of parameters.
struct StepTargets {
  std::vector<Matrix> z_smooth;
  std::vector<HardNegatives> hard;
  std::vector<PatchSelection> selection;
};

struct LossTerms {
  Tensor total;
  double clsf = 0.0;
  double wps = 0.0;
  double penalty = 0.0;
  /// Mean |Δx̃| over all entries of the batch.
  double mean_abs_delta = 0.0;
};

/// L = L_clsf + γ_wps·L_wps + γ_penalty·L_penalty, each averaged over the batch.
/// Only seen classes enter the classification and WPS terms; StepTargets are
/// indexed over those classes.
LossTerms total_loss(const DartModel& model, std::span<const BatchItem> batch, double lambda,
                     StepTargets* capture = nullptr, const StepTargets* fixed = nullptr);

}  // namespace dart

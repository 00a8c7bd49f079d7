#pragma once

#include <string>
#include <vector>

#include "dart/class_graph.hpp"
#include "dart/parameter.hpp"
#include "dart/random.hpp"
#include "dart/tensor.hpp"

namespace dart {

/// One GATv2 attention head. Feature maps act on row features as X·Wᵀ.
struct GatHead {
  Tensor w_left;   // d_h×d, applied to the receiving node c
  Tensor w_right;  // d_h×d, applied to the sending node j
  Tensor a;        // d_h×1
  Tensor w_agg;    // d_h×d
};

struct GatLayer {
  std::vector<GatHead> heads;
};

/// [x_vis | h_txt] (2d) → d → d, LeakyReLU between, bias-free.
struct FusionNet {
  Tensor w1;  // d×2d
  Tensor w2;  // d×d
};

struct AtmConfig {
  Index heads = 4;
  Index layers = 2;
  double slope = 0.2;
  /// Multiplier on the Glorot init std of every ATM weight.
  double init_gain = 0.5;

  void validate(Index d) const;
};

/// Normalized attention of one (stage, layer, head) over all edges.
struct AttentionRecord {
  std::string stage;
  Index layer = 0;
  Index head = 0;
  Matrix alpha;  // E×1, aligned with GraphEdges
};

using AttentionTrace = std::vector<AttentionRecord>;

/// e_cj = aᵀ·LeakyReLU(W_left h_c + W_right h_j) for every edge; E×1.
Tensor gatv2_scores(const Tensor& h, const GatHead& head, const GraphEdges& edges,
                    double slope = 0.2);

/// Softmax of edge scores within each receiving node's neighborhood.
Tensor attention_normalize(const Tensor& scores, const GraphEdges& edges);

/// σ_GAT(Σ_j α̂_cj W_agg h_j), C×d_h.
Tensor head_aggregate(const Tensor& h, const Tensor& alpha, const GatHead& head,
                      const GraphEdges& edges, double slope = 0.2);

/// concat over heads + residual.
Tensor gat_layer(const Tensor& h, const GatLayer& layer, const GraphEdges& edges,
                 double slope = 0.2, AttentionTrace* trace = nullptr,
                 const std::string& stage = "", Index layer_index = 0);

Tensor gat_stack(const Tensor& h0, const std::vector<GatLayer>& layers, const GraphEdges& edges,
                 double slope, AttentionTrace* trace, const std::string& stage);

/// Text-ATM: h_0 = t.
Tensor text_atm(const Tensor& text, const GraphEdges& edges, const std::vector<GatLayer>& layers,
                double slope = 0.2, AttentionTrace* trace = nullptr);

Tensor fuse(const Tensor& x_vis, const Tensor& h_txt, const FusionNet& net, double slope = 0.2);

/// MM-ATM: h_0 = x_mm.
Tensor mm_atm(const Tensor& x_mm, const GraphEdges& edges, const std::vector<GatLayer>& layers,
              double slope = 0.2, AttentionTrace* trace = nullptr);

/// Owns the Text-ATM, MM-ATM and fusion parameters.
class Atm {
 public:
  Atm(const AtmConfig& cfg, Index d, ParameterSet& params, Rng& rng);

  [[nodiscard]] const std::vector<GatLayer>& text_layers() const { return text_layers_; }
  [[nodiscard]] const std::vector<GatLayer>& mm_layers() const { return mm_layers_; }
  [[nodiscard]] const FusionNet& fusion() const { return fusion_; }
  [[nodiscard]] const AtmConfig& config() const { return cfg_; }

 private:
  AtmConfig cfg_;
  std::vector<GatLayer> text_layers_;
  std::vector<GatLayer> mm_layers_;
  FusionNet fusion_;
};

}  // namespace dart

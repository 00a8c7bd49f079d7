#pragma once

#include <span>
#include <vector>

#include "dart/backbone.hpp"
#include "dart/parameter.hpp"
#include "dart/random.hpp"
#include "dart/tensor.hpp"

namespace dart {

enum class LoraTarget { kQuery, kOutput };

/// Low-rank additive update of one frozen projection: W + (α/r)·B·A.
struct LoraAdapter {
  Tensor a;  // r×d
  Tensor b;  // d×r, zero at init
  Index rank = 0;
  double alpha = 0.0;
  LoraTarget target = LoraTarget::kQuery;

  [[nodiscard]] double scaling() const { return alpha / static_cast<double>(rank); }
};

struct ArmLayer {
  Index block_index = 0;
  LoraAdapter lora_q;
  LoraAdapter lora_out;
  Tensor dw_kernel;  // (kh·kw)×d, one filter per channel
};

/// d → d → d with LeakyReLU between; output projection starts at zero.
struct ArmHead {
  Tensor w1;  // d×d
  Tensor w2;  // d×d
  double slope = 0.2;
};

struct ArmConfig {
  Index rank = 4;
  double alpha = 16.0;
  /// Number of trailing backbone blocks that host an ARM layer.
  Index attach_layers = 2;
  Index kernel = 3;

  void validate(Index d, Index depth) const;
};

/// Adapted patch features x̃ = x_orig + Δx̃ together with the residual Δx̃.
struct ArmOutput {
  Tensor adapted;  // N_p×d
  Tensor delta;    // N_p×d
};

class Arm {
 public:
  /// Registers all trainable ARM parameters under "arm/..." in `params`.
  Arm(const ArmConfig& cfg, const Backbone& backbone, ParameterSet& params, Rng& rng);
  /// Wraps explicitly constructed layers; used by tests and fixtures.
  Arm(const ArmConfig& cfg, const Backbone& backbone, std::vector<ArmLayer> layers, ArmHead head);

  [[nodiscard]] ArmOutput adapt(const BackboneOutput& frozen) const;

  [[nodiscard]] const std::vector<ArmLayer>& layers() const { return layers_; }
  [[nodiscard]] const ArmHead& head() const { return head_; }
  [[nodiscard]] const ArmConfig& config() const { return cfg_; }

 private:
  ArmConfig cfg_;
  const Backbone* backbone_;
  std::vector<ArmLayer> layers_;
  ArmHead head_;
};

/// x·Wᵀ + (α/r)·(x·Aᵀ)·Bᵀ.
Tensor lora_project(const Tensor& x, const Tensor& frozen_weight, const LoraAdapter& adapter);

/// Attention sublayer of a frozen block with LoRA on the query and output
/// projections; keys and values use the frozen weights untouched.
Tensor lora_attention(const Tensor& x_prev, const BackboneBlock& block, const LoraAdapter& lora_q,
                      const LoraAdapter& lora_out);

/// Depthwise convolution over the patch grid; row 0 (global token) passes through.
Tensor local_context_encode(const Tensor& x_lora, Index grid_h, Index grid_w, const Tensor& kernel,
                            Index kernel_size);

/// Attn(Q = x_dw, K = x_orig_l, V = x_orig_l).
Tensor cross_attention_integrate(const Tensor& x_dw, const Tensor& x_orig_l);

/// Sum of |Δx̃| per image, averaged over the batch.
Tensor penalty(std::span<const Tensor> deltas);

/// LoRA scalars for adapters on the query and output projections: layers·2·(d·r + r·d).
constexpr Index lora_parameter_count(Index d, Index rank, Index layers) {
  return layers * 2 * (d * rank + rank * d);
}

}  // namespace dart

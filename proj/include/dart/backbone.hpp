#pragma once

#include <cstdint>
#include <vector>

#include "dart/parameter.hpp"
#include "dart/tensor.hpp"

namespace dart {

/// Seeded stand-in for a frozen vision-language image encoder.
struct BackboneConfig {
  Index depth = 4;
  Index d = 32;
  Index grid_h = 4;
  Index grid_w = 4;
  Index d_in = 32;
  std::uint64_t seed = 7;
  /// Std-dev multiplier for the attention value/output projections. Controls
  /// how much context each patch absorbs from the rest of the image.
  double mix_scale = 0.6;
  double ffn_scale = 0.3;
  /// Std-dev multiplier for the query/key projections.
  double qk_scale = 1.0;

  [[nodiscard]] Index num_patches() const { return grid_h * grid_w; }
  void validate() const;
};

struct BackboneOutput {
  /// Residual stream after each block, (N_p+1)×d with the global token at row 0.
  std::vector<Matrix> per_block;
  /// Token embeddings before the first block, same layout.
  Matrix embedded;
  Matrix patches_final;  // N_p×d
  Vector global;         // d
};

/// Frozen projections of one block, held as non-trainable tensors so adapter
/// pathways can reuse them without creating gradient slots.
struct BackboneBlock {
  Tensor wq, wk, wv, wout;  // d×d, applied as X·Wᵀ
  Tensor w1;                // 2d×d
  Tensor w2;                // d×2d
};

class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  [[nodiscard]] BackboneOutput encode(const Matrix& raw) const;

  /// x + Attn(LN x) projected by W_out; the attention sublayer of block `layer`.
  [[nodiscard]] Matrix attention_sublayer(Index layer, const Matrix& x) const;

  [[nodiscard]] const BackboneConfig& config() const { return cfg_; }
  [[nodiscard]] const BackboneBlock& block(Index layer) const { return blocks_.at(layer); }
  [[nodiscard]] const ParameterSet& parameters() const { return params_; }
  /// Patch embedding, d×d_in.
  [[nodiscard]] const Matrix& embedding() const { return embed_.value(); }
  [[nodiscard]] std::uint64_t checksum() const;

 private:
  BackboneConfig cfg_;
  ParameterSet params_;
  std::vector<BackboneBlock> blocks_;
  Tensor embed_;  // d×d_in
  Tensor pos_;    // (N_p+1)×d
};

/// Unit-norm pseudo-random class text embedding, a pure function of (class_id, seed).
Vector text_embed(Index class_id, Index vocab_size, Index d, std::uint64_t seed);

/// Text embedding anchored on a class prototype: normalize(prototype/‖prototype‖ + σ·noise).
Vector text_embed_anchored(Index class_id, Index vocab_size, const Vector& prototype,
                           double noise_sigma, std::uint64_t seed);

}  // namespace dart

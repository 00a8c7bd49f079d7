#include "dart/arm.hpp"

#include <cmath>
#include <string>

#include "dart/error.hpp"

namespace dart {

void ArmConfig::validate(Index d, Index depth) const {
  if (rank < 1 || rank >= d) {
    throw ConfigError("arm: LoRA rank " + std::to_string(rank) + " must lie in [1, d=" +
                      std::to_string(d) + ")");
  }
  if (attach_layers < 1) {
    throw ConfigError("arm: at least one ARM layer is required");
  }
  if (attach_layers > depth) {
    throw ConfigError("arm: cannot attach " + std::to_string(attach_layers) + " layers to a " +
                      std::to_string(depth) + "-block backbone");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("arm: depthwise kernel size must be odd");
  }
}

Arm::Arm(const ArmConfig& cfg, const Backbone& backbone, ParameterSet& params, Rng& rng)
    : cfg_(cfg), backbone_(&backbone) {
  const Index d = backbone.config().d;
  const Index depth = backbone.config().depth;
  cfg_.validate(d, depth);
  const double a_std = 1.0 / std::sqrt(static_cast<double>(d));
  const Index taps = cfg_.kernel * cfg_.kernel;

  for (Index i = 0; i < cfg_.attach_layers; ++i) {
    const std::string p = "arm/layer" + std::to_string(i) + "/";
    ArmLayer layer;
    layer.block_index = depth - cfg_.attach_layers + i;
    auto make_adapter = [&](const std::string& name, LoraTarget target) {
      LoraAdapter ad;
      ad.rank = cfg_.rank;
      ad.alpha = cfg_.alpha;
      ad.target = target;
      ad.a = params.add(p + name + "/A", randn(cfg_.rank, d, rng, a_std));
      ad.b = params.add(p + name + "/B", Matrix::Zero(d, cfg_.rank));
      return ad;
    };
    layer.lora_q = make_adapter("lora_q", LoraTarget::kQuery);
    layer.lora_out = make_adapter("lora_out", LoraTarget::kOutput);
    // Center tap one: the convolution starts as the identity.
    Matrix kernel = Matrix::Zero(taps, d);
    kernel.row(taps / 2).setOnes();
    layer.dw_kernel = params.add(p + "dw_kernel", std::move(kernel));
    layers_.push_back(std::move(layer));
  }
  head_.w1 = params.add("arm/head/w1", randn(d, d, rng, a_std));
  head_.w2 = params.add("arm/head/w2", Matrix::Zero(d, d));
}

Arm::Arm(const ArmConfig& cfg, const Backbone& backbone, std::vector<ArmLayer> layers, ArmHead head)
    : cfg_(cfg), backbone_(&backbone), layers_(std::move(layers)), head_(std::move(head)) {
  if (layers_.empty()) {
    throw ConfigError("arm: at least one ARM layer is required");
  }
}

ArmOutput Arm::adapt(const BackboneOutput& frozen) const {
  if (layers_.empty()) {
    throw ConfigError("arm: at least one ARM layer is required");
  }
  const auto& bcfg = backbone_->config();
  const Index first = layers_.front().block_index;
  Tensor x = Tensor::constant(first == 0 ? frozen.embedded : frozen.per_block.at(first - 1));
  for (const auto& layer : layers_) {
    const auto& block = backbone_->block(layer.block_index);
    const Tensor x_lora = lora_attention(x, block, layer.lora_q, layer.lora_out);
    const Tensor x_dw =
        local_context_encode(x_lora, bcfg.grid_h, bcfg.grid_w, layer.dw_kernel, cfg_.kernel);
    x = cross_attention_integrate(x_dw, Tensor::constant(frozen.per_block.at(layer.block_index)));
  }
  const Tensor patches = slice_rows(x, 1, x.rows() - 1);
  const Tensor hidden = leaky_relu(matmul_nt(patches, head_.w1), head_.slope);
  Tensor delta = matmul_nt(hidden, head_.w2);
  Tensor adapted = add(Tensor::constant(frozen.patches_final), delta);
  return {std::move(adapted), std::move(delta)};
}

Tensor lora_project(const Tensor& x, const Tensor& frozen_weight, const LoraAdapter& adapter) {
  const Tensor base = matmul_nt(x, frozen_weight);
  const Tensor low = matmul_nt(matmul_nt(x, adapter.a), adapter.b);
  return add(base, scale(low, adapter.scaling()));
}

Tensor lora_attention(const Tensor& x_prev, const BackboneBlock& block, const LoraAdapter& lora_q,
                      const LoraAdapter& lora_out) {
  const Index d = x_prev.cols();
  if (lora_q.rank >= d || lora_out.rank >= d || lora_q.rank < 1 || lora_out.rank < 1) {
    throw ConfigError("lora_attention: LoRA rank must lie in [1, d=" + std::to_string(d) + ")");
  }
  const Tensor ln = layer_norm_rows(x_prev);
  const Tensor q = lora_project(ln, block.wq, lora_q);
  const Tensor k = matmul_nt(ln, block.wk);
  const Tensor v = matmul_nt(ln, block.wv);
  const Tensor attended = scaled_dot_attention(q, k, v);
  return add(lora_project(attended, block.wout, lora_out), x_prev);
}

Tensor local_context_encode(const Tensor& x_lora, Index grid_h, Index grid_w, const Tensor& kernel,
                            Index kernel_size) {
  const Index n_patches = x_lora.rows() - 1;
  if (n_patches != grid_h * grid_w) {
    throw DimensionError("local_context_encode: " + std::to_string(n_patches) +
                         " patch rows do not form a " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w) + " grid");
  }
  const Tensor global = slice_rows(x_lora, 0, 1);
  const Tensor patches = slice_rows(x_lora, 1, n_patches);
  const Tensor conv = depthwise_conv2d(patches, grid_h, grid_w, kernel, kernel_size, kernel_size);
  return concat_rows(global, conv);
}

Tensor cross_attention_integrate(const Tensor& x_dw, const Tensor& x_orig_l) {
  if (x_dw.cols() != x_orig_l.cols()) {
    throw DimensionError("cross_attention_integrate: widths " + std::to_string(x_dw.cols()) +
                         " and " + std::to_string(x_orig_l.cols()) + " differ");
  }
  return scaled_dot_attention(x_dw, x_orig_l, x_orig_l);
}

Tensor penalty(std::span<const Tensor> deltas) {
  if (deltas.empty()) return Tensor::scalar(0.0);
  Tensor total = sum(abs(deltas.front()));
  for (std::size_t i = 1; i < deltas.size(); ++i) total = add(total, sum(abs(deltas[i])));
  return scale(total, 1.0 / static_cast<double>(deltas.size()));
}

}  // namespace dart

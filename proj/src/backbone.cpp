#include "dart/backbone.hpp"

#include <cmath>
#include <string>

#include "dart/error.hpp"
#include "dart/random.hpp"

namespace dart {

namespace {

// Frozen path uses the same tensor kernels as the adapter pathway so that a
// zero adapter reproduces the frozen sublayer bit for bit.
Tensor attention_sublayer_t(const BackboneBlock& b, const Tensor& x) {
  const Tensor ln = layer_norm_rows(x);
  const Tensor q = matmul_nt(ln, b.wq);
  const Tensor k = matmul_nt(ln, b.wk);
  const Tensor v = matmul_nt(ln, b.wv);
  return add(matmul_nt(scaled_dot_attention(q, k, v), b.wout), x);
}

Tensor ffn_sublayer_t(const BackboneBlock& b, const Tensor& x) {
  const Tensor ln = layer_norm_rows(x);
  return add(matmul_nt(leaky_relu(matmul_nt(ln, b.w1)), b.w2), x);
}

}  // namespace

void BackboneConfig::validate() const {
  if (depth < 1 || d < 1 || grid_h < 1 || grid_w < 1 || d_in < 1) {
    throw ConfigError("backbone: all dimensions must be >= 1");
  }
}

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(cfg_.seed, 0xBAC0));
  const Index d = cfg_.d;
  const double base = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix embed;
  if (cfg_.d_in == d) {
    embed = Matrix::Identity(d, d);
  } else {
    embed = randn(d, cfg_.d_in, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.d_in)));
  }
  embed_ = params_.add("backbone/embed", std::move(embed), true);
  pos_ = params_.add("backbone/pos", randn(cfg_.num_patches() + 1, d, rng, 0.02), true);

  for (Index l = 0; l < cfg_.depth; ++l) {
    const std::string p = "backbone/block" + std::to_string(l) + "/";
    BackboneBlock b;
    b.wq = params_.add(p + "wq", randn(d, d, rng, base * cfg_.qk_scale), true);
    b.wk = params_.add(p + "wk", randn(d, d, rng, base * cfg_.qk_scale), true);
    b.wv = params_.add(p + "wv", randn(d, d, rng, base * cfg_.mix_scale), true);
    b.wout = params_.add(p + "wout", randn(d, d, rng, base * cfg_.mix_scale), true);
    b.w1 = params_.add(p + "w1", randn(2 * d, d, rng, base * cfg_.ffn_scale), true);
    b.w2 = params_.add(p + "w2", randn(d, 2 * d, rng, base * cfg_.ffn_scale / std::sqrt(2.0)),
                       true);
    blocks_.push_back(std::move(b));
  }
}

BackboneOutput Backbone::encode(const Matrix& raw) const {
  if (raw.rows() != cfg_.num_patches()) {
    throw DimensionError("backbone: expected " + std::to_string(cfg_.num_patches()) +
                         " patches, got " + std::to_string(raw.rows()));
  }
  if (raw.cols() != cfg_.d_in) {
    throw DimensionError("backbone: expected patch width " + std::to_string(cfg_.d_in) +
                         ", got " + std::to_string(raw.cols()));
  }
  const Matrix patches = raw * embed_.value().transpose();
  Matrix tokens(patches.rows() + 1, cfg_.d);
  tokens.row(0) = patches.colwise().mean();
  tokens.bottomRows(patches.rows()) = patches;
  tokens += pos_.value();

  BackboneOutput out;
  out.embedded = tokens;
  Tensor x = Tensor::constant(tokens);
  for (const auto& b : blocks_) {
    x = ffn_sublayer_t(b, attention_sublayer_t(b, x));
    out.per_block.push_back(x.value());
  }
  const Matrix& last = out.per_block.back();
  out.patches_final = last.bottomRows(last.rows() - 1);
  out.global = last.row(0).transpose();
  return out;
}

Matrix Backbone::attention_sublayer(Index layer, const Matrix& x) const {
  return attention_sublayer_t(block(layer), Tensor::constant(x)).value();
}

std::uint64_t Backbone::checksum() const {
  std::vector<const Matrix*> values;
  for (const auto& p : params_.items()) values.push_back(&p.tensor.value());
  return dart::checksum(values);
}

Vector text_embed(Index class_id, Index vocab_size, Index d, std::uint64_t seed) {
  if (class_id < 0 || class_id >= vocab_size) {
    throw RangeError("text_embed: class id " + std::to_string(class_id) + " outside vocabulary of " +
                     std::to_string(vocab_size));
  }
  Rng rng(mix_seed(seed, 0x7E47ULL + static_cast<std::uint64_t>(class_id)));
  Vector v = randn(d, 1, rng);
  return v / v.norm();
}

Vector text_embed_anchored(Index class_id, Index vocab_size, const Vector& prototype,
                           double noise_sigma, std::uint64_t seed) {
  if (class_id < 0 || class_id >= vocab_size) {
    throw RangeError("text_embed: class id " + std::to_string(class_id) + " outside vocabulary of " +
                     std::to_string(vocab_size));
  }
  Rng rng(mix_seed(seed, 0xA7C0ULL + static_cast<std::uint64_t>(class_id)));
  Vector v = prototype / prototype.norm() + randn(prototype.size(), 1, rng, noise_sigma);
  return v / v.norm();
}

}  // namespace dart

#include <doctest.h>

#include "dart/arm.hpp"
#include "dart/error.hpp"
#include "oracles.hpp"

using namespace dart;

namespace {

BackboneConfig small_backbone() {
  BackboneConfig cfg;
  cfg.d = 8;
  cfg.d_in = 8;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.depth = 2;
  return cfg;
}

}  // namespace

TEST_CASE("fresh ARM leaves the frozen features alone") {
  const Backbone bb(BackboneConfig{});
  ParameterSet params;
  Rng rng(1);
  const Arm arm(ArmConfig{}, bb, params, rng);
  const BackboneOutput out = bb.encode(randn(16, 32, rng));
  const ArmOutput a = arm.adapt(out);
  CHECK(a.delta.value().isZero(0));
  CHECK(a.adapted.value() == out.patches_final);

  // B = 0 makes the LoRA attention the frozen sublayer
  const auto& layer = arm.layers().front();
  const Matrix x = out.per_block.at(layer.block_index - 1);
  const Matrix lora = lora_attention(Tensor::constant(x), bb.block(layer.block_index), layer.lora_q, layer.lora_out).value();
  CHECK((lora - bb.attention_sublayer(layer.block_index, x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter counts and config checks") {
  CHECK(lora_parameter_count(32, 4, 2) == 1024);
  CHECK(lora_parameter_count(32, 4, 1) == 512);
  const Backbone bb(BackboneConfig{});
  ParameterSet params;
  Rng rng(2);
  const Arm arm(ArmConfig{}, bb, params, rng);
  std::size_t lora = 0;
  for (const auto& p : params.items()) {
    if (p.name.find("lora") != std::string::npos) lora += static_cast<std::size_t>(p.tensor.value().size());
  }
  CHECK(lora == 1024);
  CHECK(arm.layers().size() == 2);
  CHECK(arm.layers()[0].block_index == 2);
  CHECK(arm.layers()[1].block_index == 3);

  ArmConfig bad;
  bad.rank = 32;
  ParameterSet p2;
  CHECK_THROWS_AS(Arm(bad, bb, p2, rng), ConfigError);
  bad.rank = 4;
  bad.kernel = 2;
  CHECK_THROWS_AS(Arm(bad, bb, p2, rng), ConfigError);
  bad.kernel = 3;
  bad.attach_layers = 5;
  CHECK_THROWS_AS(Arm(bad, bb, p2, rng), ConfigError);
}

TEST_CASE("local context encoder") {
  Rng rng(3);
  const Matrix x = randn(17, 4, rng);
  Matrix id = Matrix::Zero(9, 4);
  id.row(4).setOnes();
  CHECK(local_context_encode(Tensor::constant(x), 4, 4, Tensor::constant(id), 3).value() == x);

  const Matrix zero = local_context_encode(Tensor::constant(x), 4, 4, Tensor::constant(Matrix::Zero(9, 4)), 3).value();
  CHECK(zero.row(0) == x.row(0));
  CHECK(zero.bottomRows(16).isZero(0));

  const Matrix k = randn(9, 4, rng);
  const Matrix got = local_context_encode(Tensor::constant(x), 4, 4, Tensor::constant(k), 3).value();
  CHECK(got.row(0) == x.row(0));
  CHECK((got.bottomRows(16) - oracle::naive_dwconv(x.bottomRows(16), 4, 4, k, 3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS((void)local_context_encode(Tensor::constant(randn(16, 4, rng)), 4, 4, Tensor::constant(k), 3),
                  DimensionError);
}

TEST_CASE("cross attention") {
  Rng rng(4);
  const Matrix q = randn(5, 6, rng);
  const Matrix one = randn(1, 6, rng);
  const Matrix out = cross_attention_integrate(Tensor::constant(q), Tensor::constant(one)).value();
  for (Index i = 0; i < 5; ++i) CHECK((out.row(i) - one).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix kv = randn(7, 6, rng);
  CHECK((cross_attention_integrate(Tensor::constant(q), Tensor::constant(kv)).value() -
         oracle::naive_attention(q, kv, kv))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  // a zero query attends uniformly
  const Matrix uni = cross_attention_integrate(Tensor::constant(Matrix::Zero(1, 6)), Tensor::constant(kv)).value();
  CHECK((uni - kv.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS((void)cross_attention_integrate(Tensor::constant(q), Tensor::constant(randn(3, 4, rng))),
                  DimensionError);
}

TEST_CASE("full ARM chain matches finite differences") {
  const Backbone bb(small_backbone());
  ParameterSet params;
  Rng rng(5);
  ArmConfig cfg;
  cfg.rank = 2;
  const Arm arm(cfg, bb, params, rng);
  // move off the zero init so every path carries gradient
  for (auto& p : params.items()) p.tensor.mutable_value() += randn(p.tensor.rows(), p.tensor.cols(), rng, 0.3);
  const BackboneOutput out = bb.encode(randn(4, 8, rng));
  const Matrix w = randn(4, 8, rng);
  std::vector<Tensor> ps;
  for (auto& p : params.items()) ps.push_back(p.tensor);
  const double err = oracle::grad_error(ps, [&] { return weighted_sum(arm.adapt(out).adapted, w); });
  CHECK(err < 1e-5);
  const double err_pen = oracle::grad_error(ps, [&] {
    const Tensor d = arm.adapt(out).delta;
    return sum(hadamard(d, d));
  });
  CHECK(err_pen < 1e-5);
}

TEST_CASE("penalty") {
  Matrix a(1, 2), b(1, 2);
  a << 1, -2;
  b << 0, 3;
  const std::vector<Tensor> ds{Tensor::constant(a), Tensor::constant(b)};
  CHECK(penalty(ds).item() == doctest::Approx(3.0));
  CHECK(penalty(std::span<const Tensor>{}).item() == 0.0);
  const std::vector<Tensor> one{Tensor::constant(Matrix::Constant(2, 2, -0.5))};
  CHECK(penalty(one).item() == doctest::Approx(2.0));
}

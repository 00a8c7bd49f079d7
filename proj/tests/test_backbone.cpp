#include <doctest.h>

#include "dart/backbone.hpp"
#include "dart/dataset.hpp"
#include "dart/error.hpp"
#include "dart/random.hpp"

using namespace dart;

TEST_CASE("encode shapes and determinism") {
  BackboneConfig cfg;
  const Backbone bb(cfg);
  Rng rng(1);
  const Matrix raw = randn(16, 32, rng);
  const BackboneOutput a = bb.encode(raw);
  const BackboneOutput b = bb.encode(raw);
  CHECK(a.per_block.size() == 4);
  CHECK(a.per_block[0].rows() == 17);
  CHECK(a.patches_final.rows() == 16);
  CHECK(a.patches_final.cols() == 32);
  CHECK(a.global.size() == 32);
  CHECK(a.patches_final == b.patches_final);
  CHECK(a.global == b.global);
  CHECK(a.patches_final == a.per_block.back().bottomRows(16));

  CHECK_THROWS_AS((void)bb.encode(randn(15, 32, rng)), DimensionError);
  CHECK_THROWS_AS((void)bb.encode(randn(16, 31, rng)), DimensionError);
}

TEST_CASE("zero input stays finite") {
  BackboneConfig cfg;
  cfg.mix_scale = 0.0;  // zero value/output projections
  const Backbone bb(cfg);
  const BackboneOutput out = bb.encode(Matrix::Zero(16, 32));
  for (const auto& m : out.per_block) CHECK(m.allFinite());
}

TEST_CASE("weights are a pure function of the seed and stay frozen") {
  BackboneConfig cfg;
  const Backbone a(cfg), b(cfg);
  CHECK(a.checksum() == b.checksum());
  cfg.seed = 8;
  CHECK(Backbone(cfg).checksum() != a.checksum());

  for (const auto& p : a.parameters().items()) CHECK(p.frozen);

  Rng rng(2);
  Matrix raw = randn(16, 32, rng);
  const std::uint64_t before = a.checksum();
  const BackboneOutput base = a.encode(raw);
  raw.row(5).array() += 1.0;
  const BackboneOutput moved = a.encode(raw);
  CHECK(a.checksum() == before);
  // attention spreads the change to every token
  for (Index i = 0; i < 16; ++i) CHECK((moved.patches_final.row(i) - base.patches_final.row(i)).norm() > 0.0);
}

TEST_CASE("text embeddings") {
  for (Index c = 0; c < 5; ++c) {
    const Vector t = text_embed(c, 5, 32, 3);
    CHECK(std::abs(t.norm() - 1.0) < 1e-12);
    CHECK(t == text_embed(c, 5, 32, 3));
  }
  CHECK((text_embed(0, 5, 32, 3) - text_embed(1, 5, 32, 3)).norm() > 0.1);
  CHECK_THROWS_AS((void)text_embed(5, 5, 32, 3), RangeError);
  CHECK_THROWS_AS((void)text_embed(-1, 5, 32, 3), RangeError);
}

TEST_CASE("anchored text points at its own prototype") {
  const Backbone bb(BackboneConfig{});
  const SyntheticData synth = gen_synthetic_dataset(SyntheticSpec{}, &bb.embedding());
  const Matrix& t = synth.vocab.embeddings;
  Matrix protos = synth.prototypes * bb.embedding().transpose();
  protos.rowwise().normalize();
  for (Index c = 0; c < t.rows(); ++c) {
    const double own = t.row(c).dot(protos.row(c));
    for (Index o = 0; o < t.rows(); ++o) {
      if (o != c) CHECK(own > t.row(c).dot(protos.row(o)));
    }
    CHECK(std::abs(t.row(c).norm() - 1.0) < 1e-12);
  }
}

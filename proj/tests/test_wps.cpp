#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dart/error.hpp"
#include "dart/wps.hpp"
#include "oracles.hpp"

using namespace dart;

TEST_CASE("responsibility columns sum to one") {
  Rng rng(1);
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const Index n = 1 + uniform_index(rng, 0, 20);
    const Index c = 1 + uniform_index(rng, 0, 6);
    const Matrix s = randn(n, c, rng, 0.5);
    Labels y(static_cast<std::size_t>(c));
    for (auto& v : y) v = uniform01(rng) < 0.5;
    const Matrix z = responsibilities_model(s, y, 1.0 / 14.0);
    for (Index j = 0; j < c; ++j) {
      if (y[static_cast<std::size_t>(j)]) {
        worst = std::max(worst, std::abs(z.col(j).sum() - 1.0));
        CHECK((z.col(j).array() >= 0.0).all());
      } else {
        CHECK(z.col(j).isZero(0));
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("responsibility oracle") {
  Matrix s(3, 1);
  s << 0.1, 0.2, 0.3;
  const Matrix z = responsibilities_model(s, {1}, 0.1);
  const double den = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(z(2, 0) == doctest::Approx(std::exp(3.0) / den).epsilon(1e-14));
  CHECK(z(0, 0) == doctest::Approx(std::exp(1.0) / den).epsilon(1e-14));
  CHECK_THROWS_AS((void)responsibilities_model(s, {1, 0}, 0.1), DimensionError);
  CHECK_THROWS_AS((void)responsibilities_model(s, {1}, 0.0), RangeError);
}

TEST_CASE("smoothing endpoints are exact") {
  Rng rng(2);
  const Matrix a = randn(5, 3, rng), b = randn(5, 3, rng);
  CHECK(smooth(a, b, 0.0) == a);
  CHECK(smooth(a, b, 1.0) == b);
  CHECK((smooth(a, b, 0.25) - (0.25 * b + 0.75 * a)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS((void)smooth(a, b, 1.5), RangeError);
  CHECK_THROWS_AS((void)smooth(a, b, -0.1), RangeError);
}

TEST_CASE("lambda schedule") {
  LambdaSchedule lin;
  CHECK(lambda_schedule(0, 100, lin) == 1.0);
  CHECK(lambda_schedule(40, 100, lin) == doctest::Approx(0.5));
  CHECK(lambda_schedule(80, 100, lin) == 0.0);
  CHECK(lambda_schedule(100, 100, lin) == 0.0);
  for (Index s = 1; s <= 100; ++s) CHECK(lambda_schedule(s, 100, lin) <= lambda_schedule(s - 1, 100, lin));

  LambdaSchedule c;
  c.kind = LambdaSchedule::Kind::kConstant;
  c.constant = 0.4;
  CHECK(lambda_schedule(7, 100, c) == 0.4);
  c.constant = 0.5;
  CHECK(lambda_schedule(99, 100, c) == 0.5);
}

TEST_CASE("hard negatives") {
  Matrix s(4, 3);
  s << 0.9, 0.1, 0.2,
       0.8, 0.7, 0.2,
       0.1, 0.9, 0.2,
       0.0, 0.3, 0.2;
  const HardNegatives h = hard_negative_indices(s, {1, 0, 0}, 2);
  CHECK(h.per_class[0].empty());
  CHECK(h.per_class[1] == std::vector<Index>{2, 1});
  CHECK(h.per_class[2] == std::vector<Index>{0, 1});  // ties go to the lower index
  CHECK_FALSE(h.clamped);

  const HardNegatives big = hard_negative_indices(s, {1, 0, 0}, 9);
  CHECK(big.clamped);
  CHECK(big.per_class[1].size() == 4);
  const HardNegatives none = hard_negative_indices(s, {1, 0, 0}, 0);
  CHECK(none.per_class[1].empty());
}

TEST_CASE("wps loss values") {
  // one positive patch at score 0 with full responsibility: -log σ(0) = log 2
  Matrix s = Matrix::Zero(2, 2);
  Matrix z = Matrix::Zero(2, 2);
  z(0, 0) = 1.0;
  HardNegatives none;
  none.per_class.resize(2);
  CHECK(wps_loss(Tensor::constant(s), z, {1, 0}, none).item() == doctest::Approx(0.693147).epsilon(1e-6));

  // hard negative term adds -log σ(-s) per selected patch
  s(1, 1) = 0.5;
  HardNegatives hn;
  hn.per_class = {{}, {1}};
  const double expect = std::log(2.0) + std::log1p(std::exp(0.5));
  CHECK(wps_loss(Tensor::constant(s), z, {1, 0}, hn).item() == doctest::Approx(expect).epsilon(1e-12));

  // patches with zero responsibility and no negative selection do not matter
  Matrix s2 = s;
  s2(1, 0) = 5.0;
  s2(0, 1) = -3.0;
  CHECK(wps_loss(Tensor::constant(s2), z, {1, 0}, hn).item() == wps_loss(Tensor::constant(s), z, {1, 0}, hn).item());
}

TEST_CASE("wps loss gradient") {
  Rng rng(3);
  auto s = Tensor::variable(randn(6, 4, rng, 0.5));
  const Labels y{1, 0, 1, 0};
  const Matrix z = responsibilities_model(s.value(), y, 1.0 / 14.0);
  const HardNegatives h = hard_negative_indices(s.value(), y, 3);
  s.zero_grad();
  backward(wps_loss(s, z, y, h));
  // closed form: -z(1-σ(s)) on positives, σ(s) on selected negatives
  Matrix expect = Matrix::Zero(6, 4);
  for (Index c = 0; c < 4; ++c)
    for (Index i = 0; i < 6; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-s.value()(i, c)));
      if (y[static_cast<std::size_t>(c)]) {
        expect(i, c) = -z(i, c) * (1.0 - sig);
      } else {
        const auto& sel = h.per_class[static_cast<std::size_t>(c)];
        if (std::find(sel.begin(), sel.end(), i) != sel.end()) expect(i, c) = sig;
      }
    }
  CHECK((s.grad() - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(oracle::grad_error({s}, [&] { return wps_loss(s, z, y, h); }, 1e-5, 1e-4) < 1e-6);
}

TEST_CASE("entropy") {
  Matrix z(2, 2);
  z << 0.5, 0.0, 0.5, 0.0;
  const Vector h = responsibility_entropy(z, {1, 0});
  CHECK(h(0) == doctest::Approx(std::log(2.0)));
  CHECK(std::isnan(h(1)));
}

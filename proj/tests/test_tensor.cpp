#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dart/error.hpp"
#include "oracles.hpp"

using namespace dart;

TEST_CASE("matmul") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(matmul(Tensor::constant(Matrix::Identity(2, 2)), Tensor::constant(a)).value() == a);

  Matrix r(1, 2), c(2, 1);
  r << 1, 0;
  c << 0, 5;
  CHECK(matmul(Tensor::constant(r), Tensor::constant(c)).value()(0, 0) == 0.0);

  Rng rng(1);
  const Matrix x = randn(3, 4, rng), y = randn(4, 2, rng);
  CHECK((matmul(Tensor::constant(x), Tensor::constant(y)).value() - oracle::naive_matmul(x, y)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((matmul_nt(Tensor::constant(x), Tensor::constant(y.transpose())).value() - oracle::naive_matmul(x, y))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  try {
    (void)matmul(Tensor::constant(x), Tensor::constant(x));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("3x4") != std::string::npos);
  }
}

TEST_CASE("softmax") {
  Matrix z(1, 2);
  z << 0, 0;
  CHECK(softmax(Tensor::constant(z), 1).value()(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  Matrix x(1, 3);
  x << 2, 1, 0;
  const Matrix s = softmax(Tensor::constant(x), 1).value();
  const double den = std::exp(2.0) + std::exp(1.0) + 1.0;
  CHECK(s(0, 0) == doctest::Approx(std::exp(2.0) / den).epsilon(1e-14));
  CHECK(s(0, 0) == doctest::Approx(0.66524).epsilon(1e-5));
  CHECK(s(0, 1) == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s(0, 2) == doctest::Approx(0.09003).epsilon(1e-4));

  CHECK(softmax(Tensor::constant(Matrix::Constant(1, 1, 7.0)), 1).value()(0, 0) == 1.0);

  Rng rng(2);
  const Matrix m = randn(5, 6, rng, 3.0);
  const Matrix rows = softmax(Tensor::constant(m), 1).value();
  const Matrix shifted = softmax(Tensor::constant((m.array() + 100.0).matrix()), 1).value();
  CHECK((rows.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((rows - shifted).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rows - oracle::naive_softmax_rows(m)).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix cols = softmax(Tensor::constant(m), 0).value();
  CHECK((cols.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

  Matrix bad(1, 2);
  bad << 0, std::nan("");
  CHECK_THROWS_AS((void)softmax(Tensor::constant(bad), 1), InvalidValueError);
  CHECK_THROWS_AS((void)softmax(Tensor::constant(z), 2), RangeError);
}

TEST_CASE("activations") {
  auto x = Tensor::variable(Matrix::Zero(1, 1));
  const Tensor y = sigmoid(x);
  CHECK(y.item() == 0.5);
  backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(0.25));

  const double ls = log_sigmoid(Tensor::constant(Matrix::Constant(1, 1, -50.0))).item();
  CHECK(std::isfinite(ls));
  CHECK(ls == doctest::Approx(-50.0 - std::log1p(std::exp(-50.0))).epsilon(1e-15));
  CHECK(log_sigmoid(Tensor::constant(Matrix::Constant(1, 1, 800.0))).item() == doctest::Approx(0.0));
  CHECK(leaky_relu(Tensor::constant(Matrix::Constant(1, 1, -1.0)), 0.2).item() == doctest::Approx(-0.2));
  CHECK(leaky_relu(Tensor::constant(Matrix::Constant(1, 1, 3.0))).item() == 3.0);
}

TEST_CASE("depthwise conv") {
  Rng rng(3);
  const Matrix x = randn(16, 2, rng);
  const auto xt = Tensor::constant(x);
  CHECK(depthwise_conv2d(xt, 4, 4, Tensor::constant(Matrix::Zero(9, 2)), 3, 3).value().isZero(0));
  Matrix center = Matrix::Zero(9, 2);
  center.row(4).setOnes();
  CHECK(depthwise_conv2d(xt, 4, 4, Tensor::constant(center), 3, 3).value() == x);

  const Matrix k = randn(9, 2, rng);
  const Matrix got = depthwise_conv2d(xt, 4, 4, Tensor::constant(k), 3, 3).value();
  CHECK((got - oracle::naive_dwconv(x, 4, 4, k, 3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  const Matrix x35 = randn(15, 3, rng);
  const Matrix k5 = randn(15, 3, rng);  // 3×5 kernel
  CHECK((depthwise_conv2d(Tensor::constant(x35), 3, 5, Tensor::constant(k5), 3, 5).value() -
         oracle::naive_dwconv(x35, 3, 5, k5, 3, 5))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  CHECK_THROWS_AS((void)depthwise_conv2d(xt, 4, 4, Tensor::constant(Matrix::Zero(4, 2)), 2, 2), ConfigError);
  CHECK_THROWS_AS((void)depthwise_conv2d(xt, 3, 4, Tensor::constant(k), 3, 3), DimensionError);
}

TEST_CASE("scaled dot attention") {
  Rng rng(4);
  const Matrix q = randn(3, 4, rng), v1 = randn(1, 4, rng), k1 = randn(1, 4, rng);
  const Matrix one = scaled_dot_attention(Tensor::constant(q), Tensor::constant(k1), Tensor::constant(v1)).value();
  for (Index i = 0; i < 3; ++i) CHECK((one.row(i) - v1).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix same_k = Matrix::Ones(5, 4);
  const Matrix v = randn(5, 4, rng);
  const Matrix uni = scaled_dot_attention(Tensor::constant(q), Tensor::constant(same_k), Tensor::constant(v)).value();
  for (Index i = 0; i < 3; ++i) CHECK((uni.row(i) - v.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);

  const Matrix q2 = randn(2, 3, rng), k2 = randn(4, 3, rng), v2 = randn(4, 3, rng);
  CHECK((scaled_dot_attention(Tensor::constant(q2), Tensor::constant(k2), Tensor::constant(v2)).value() -
         oracle::naive_attention(q2, k2, v2))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK_THROWS_AS((void)scaled_dot_attention(Tensor::constant(q2), Tensor::constant(q), Tensor::constant(q)),
                  DimensionError);
}

TEST_CASE("topk") {
  Vector v(4);
  v << 0.9, 0.1, 0.5, 0.7;
  CHECK(topk_indices(v, 2) == std::vector<Index>{0, 3});
  CHECK(topk_indices(Vector::Constant(4, 1.0), 2) == std::vector<Index>{0, 1});
  CHECK_THROWS_AS((void)topk_indices(v, 5), RangeError);
  CHECK_THROWS_AS((void)topk_indices(v, 0), RangeError);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Vector x(9);
    for (Index i = 0; i < 9; ++i) x(i) = std::round(randn(1, 1, rng)(0, 0) * 2.0);  // plenty of ties
    std::vector<Index> order(9);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a) > x(b); });
    order.resize(4);
    const auto got = topk_indices(x, 4);
    CHECK(got == order);
    // pushing any non-selected entry further down never changes the answer
    Vector y = x;
    for (Index i = 0; i < 9; ++i) {
      if (std::find(got.begin(), got.end(), i) == got.end()) y(i) -= 10.0;
    }
    CHECK(topk_indices(y, 4) == got);
  }
}

TEST_CASE("backward basics") {
  auto x = Tensor::variable(Matrix::Constant(2, 3, 0.7));
  backward(sum(x));
  CHECK(x.grad() == Matrix::Ones(2, 3));
  backward(sum(x));
  CHECK(x.grad() == Matrix::Constant(2, 3, 2.0));  // accumulates
  x.zero_grad();
  CHECK(x.grad().isZero(0));

  auto s = Tensor::variable(Matrix::Constant(1, 1, 3.0));
  backward(hadamard(s, s));
  CHECK(s.grad()(0, 0) == doctest::Approx(6.0));

  CHECK_THROWS_AS(backward(x), ContractError);

  auto frozen = Tensor::constant(Matrix::Ones(2, 2));
  auto w = Tensor::variable(Matrix::Ones(2, 2));
  backward(sum(matmul(frozen, w)));
  CHECK_FALSE(frozen.has_grad());
  CHECK(w.has_grad());
}

TEST_CASE("random composites match finite differences") {
  using oracle::grad_error;
  int checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(seed, 77));
    auto x = Tensor::variable(randn(4, 3, rng));
    auto y = Tensor::variable(randn(4, 3, rng));
    auto w = Tensor::variable(randn(3, 3, rng));
    auto g = Tensor::variable(randn(16, 2, rng));
    auto k = Tensor::variable(randn(9, 2, rng));
    const Matrix c43 = randn(4, 3, rng);
    const Matrix c44 = randn(4, 4, rng);
    const Matrix c162 = randn(16, 2, rng);
    const std::vector<Index> seg{0, 0, 1, 2};
    const std::vector<Index> pick{3, 1, 1, 0, 2};
    const std::vector<Index> into{0, 1, 1, 2, 3};

    std::vector<std::pair<std::vector<Tensor>, std::function<Tensor()>>> cases = {
        {{x, w}, [&] { return weighted_sum(softmax(matmul(x, w), 1), c43); }},
        {{x, y}, [&] { return mean(log_sigmoid(matmul_nt(x, y))); }},
        {{x}, [&] { return weighted_sum(layer_norm_rows(x), c43); }},
        {{x, w}, [&] { return weighted_sum(normalize_rows(matmul_nt(x, w)), c43); }},
        {{x, y}, [&] { return sum(hadamard(row_dot(x, y), row_dot(x, x))); }},
        {{x, y, w}, [&] { return weighted_sum(scaled_dot_attention(x, y, matmul(y, w)), c43); }},
        {{g, k}, [&] { return weighted_sum(depthwise_conv2d(g, 4, 4, k, 3, 3), c162); }},
        {{x}, [&] { return weighted_sum(segment_softmax(slice_cols(x, 1, 1), seg, 3), c43.col(0)); }},
        {{x, y}, [&] {
           return weighted_sum(segment_sum_rows(gather_rows(hadamard(x, y), pick), into, 4), c43);
         }},
        {{x, y}, [&] {
           return weighted_sum(concat_cols(sigmoid(x), scale_rows(transpose(slice_rows(transpose(y), 0, 1)), sigmoid(slice_cols(x, 0, 1)))), c44);
         }},
    };
    for (auto& [params, fn] : cases) {
      worst = std::max(worst, grad_error(params, fn));
      ++checked;
    }
  }
  CHECK(checked == 100);
  CHECK(worst < 1e-6);
}

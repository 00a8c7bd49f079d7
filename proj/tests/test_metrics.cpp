#include <doctest.h>

#include <cmath>

#include "dart/error.hpp"
#include "dart/metrics.hpp"
#include "oracles.hpp"

using namespace dart;

namespace {

using Col = oracle::Col;

Col col(std::initializer_list<int> v) {
  Col c(static_cast<Index>(v.size()));
  Index i = 0;
  for (int x : v) c(i++) = static_cast<std::uint8_t>(x);
  return c;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("average precision by hand") {
  CHECK(*average_precision(vec({0.9, 0.8, 0.1}), col({1, 1, 0})) == 1.0);
  CHECK(*average_precision(vec({0.9, 0.8, 0.7}), col({1, 0, 1})) == doctest::Approx(0.83333).epsilon(1e-5));
  // positives at ranks 2 and 3: (1/2 + 2/3) / 2
  CHECK(*average_precision(vec({0.9, 0.8, 0.7}), col({0, 1, 1})) == doctest::Approx(7.0 / 12.0));
  CHECK(*average_precision(vec({0.1, 0.2, 0.9}), col({1, 0, 0})) == doctest::Approx(1.0 / 3.0));
  // ties: lower index first
  CHECK(*average_precision(vec({0.5, 0.5}), col({0, 1})) == doctest::Approx(0.5));
  CHECK(*average_precision(vec({0.5, 0.5}), col({1, 0})) == 1.0);
  CHECK_FALSE(average_precision(vec({0.5, 0.5}), col({0, 0})).has_value());
  CHECK_THROWS_AS((void)average_precision(vec({0.5}), col({0, 0})), DimensionError);
}

TEST_CASE("random tables against brute force") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + uniform_index(rng, 0, 12);
    const Index c = 1 + uniform_index(rng, 0, 6);
    Matrix s(n, c);
    BinaryMatrix t(n, c);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < c; ++j) {
        s(i, j) = static_cast<double>(uniform_index(rng, 0, 4)) / 4.0;  // coarse, so ties happen
        t(i, j) = uniform01(rng) < 0.35;
      }
    const EvalTable table = EvalTable::make(s, t);
    const MapResult m = mean_ap(table);
    double total = 0.0;
    Index counted = 0;
    for (Index j = 0; j < c; ++j) {
      const Col tc = t.col(j);
      if (tc.cast<Index>().sum() == 0) {
        CHECK(std::isnan(m.per_class(j)));
        continue;
      }
      const double ap = oracle::brute_ap(s.col(j), tc);
      CHECK(m.per_class(j) == doctest::Approx(ap).epsilon(1e-12));
      total += ap;
      ++counted;
    }
    if (counted > 0) CHECK(m.map == doctest::Approx(total / static_cast<double>(counted)).epsilon(1e-12));
    CHECK(static_cast<Index>(m.excluded.size()) == c - counted);

    const Index k = 1 + uniform_index(rng, 0, 3);
    const Prf prf = topk_prf(table, k);
    Index tp = 0, pred = 0, rel = 0;
    for (Index i = 0; i < n; ++i) {
      const Vector row = s.row(i).transpose();
      for (Index j = 0; j < c; ++j) {
        const bool chosen = oracle::rank_of(row, j) <= k;
        pred += chosen;
        tp += chosen && t(i, j);
        rel += t(i, j);
      }
    }
    CHECK(prf.precision == doctest::Approx(pred ? double(tp) / double(pred) : 0.0));
    CHECK(prf.recall == doctest::Approx(rel ? double(tp) / double(rel) : 0.0));
    CHECK(prf.clamped == (k > c));
  }
}

TEST_CASE("precision recall by hand") {
  Matrix s(2, 3);
  s << 0.9, 0.5, 0.1,
       0.2, 0.8, 0.7;
  BinaryMatrix t(2, 3);
  t << 1, 0, 1,
       0, 0, 1;
  const EvalTable table = EvalTable::make(s, t);
  const Prf p1 = topk_prf(table, 1);
  CHECK(p1.precision == doctest::Approx(0.5));
  CHECK(p1.recall == doctest::Approx(1.0 / 3.0));
  CHECK(p1.f1 == doctest::Approx(0.4));
  const Prf p2 = topk_prf(table, 2);
  CHECK(p2.precision == doctest::Approx(0.5));
  CHECK(p2.recall == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS((void)topk_prf(table, 0), RangeError);
}

TEST_CASE("ZSL split") {
  Matrix s(2, 3);
  s << 0.9, 0.5, 0.1,
       0.2, 0.8, 0.7;
  BinaryMatrix t(2, 3);
  t << 1, 0, 1,
       0, 1, 0;
  const EvalTable table = EvalTable::make(s, t);
  const EvalTable z = split_eval(table, EvalMode::kZsl, {1, 0, 0});
  CHECK(z.num_classes() == 2);
  CHECK(z.class_ids == std::vector<Index>{1, 2});
  CHECK(z.scores.col(0) == s.col(1));
  CHECK(split_eval(table, EvalMode::kGzsl, {1, 0, 0}).num_classes() == 3);
  CHECK_THROWS_AS((void)split_eval(table, EvalMode::kZsl, {1, 1, 1}), ConfigError);
  CHECK(parse_eval_mode("GZSL") == EvalMode::kGzsl);
  CHECK_THROWS_AS((void)parse_eval_mode("fsl"), ConfigError);

  const EvalReport r = make_report(z, EvalMode::kZsl, {1, 2});
  CHECK(r.mode == "zsl");
  CHECK(r.precision.size() == 2);
  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(back.map == r.map);
  CHECK(back.k == r.k);
}

TEST_CASE("ranking loss") {
  Matrix p(3, 1);
  p << 0.9, 0.2, 0.5;
  // pairs (0,1): max(0, 1+0.2-0.9)=0.3, (0,2): 0.6
  CHECK(ranking_loss(Tensor::constant(p), {1, 0, 0}).item() == doctest::Approx(0.45));
  CHECK(ranking_loss(Tensor::constant(p), {1, 1, 1}).item() == 0.0);
  CHECK(ranking_loss(Tensor::constant(p), {0, 0, 0}).item() == 0.0);
  CHECK(ranking_loss(Tensor::constant(p), {1, 0, 0}, 0.1).item() == 0.0);
  auto v = Tensor::variable(p);
  CHECK(oracle::grad_error({v}, [&] { return ranking_loss(v, {1, 0, 1}); }) < 1e-8);
}

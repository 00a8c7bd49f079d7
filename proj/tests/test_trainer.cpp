#include <doctest.h>

#include <cmath>

#include "dart/error.hpp"
#include "dart/trainer.hpp"

using namespace dart;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.steps = 50;
  cfg.batch_size = 8;
  cfg.optim.lr_peak = 3e-3;
  cfg.optim.lr_final = 3e-4;
  return cfg;
}

SyntheticData small_data(const ModelConfig& cfg) {
  const Backbone bb(cfg.backbone);
  SyntheticSpec spec;
  spec.images = 64;
  return gen_synthetic_dataset(spec, &bb.embedding());
}

}  // namespace

TEST_CASE("AdamW matches a hand-rolled update") {
  OptimizerConfig o;
  ParameterSet ps;
  Tensor w = ps.add("w", Matrix::Constant(1, 2, 1.0));
  Tensor f = ps.add("f", Matrix::Constant(1, 1, 5.0), true);
  AdamW opt(o);
  w.zero_grad();
  backward(sum(hadamard(w, w)));  // grad 2w = 2
  opt.step(ps, 0.1);
  // first step: m̂ = g, v̂ = g², so the update is lr·g/(|g|+eps)
  const double expect = (1.0 - 0.1 * 0.01) * 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
  CHECK(w.value()(0, 0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(f.value()(0, 0) == 5.0);
  CHECK(opt.state().t == 1);
}

TEST_CASE("training keeps the backbone frozen and is deterministic") {
  const ModelConfig cfg = small_config();
  const SyntheticData s = small_data(cfg);
  const ClassGraph g = ClassGraph::isolated(s.vocab.size());

  DartModel a(cfg, s.vocab, g);
  DartModel b(cfg, s.vocab, g);
  const std::uint64_t before = a.backbone().checksum();
  Trainer ta(a, s.data), tb(b, s.data);
  std::vector<double> la, lb;
  ta.run([&](const StepLog& l) { la.push_back(l.total); });
  tb.run([&](const StepLog& l) { lb.push_back(l.total); });
  CHECK(la.size() == 50);
  CHECK(la == lb);
  for (std::size_t i = 0; i < a.params().items().size(); ++i)
    CHECK(a.params().items()[i].tensor.value() == b.params().items()[i].tensor.value());
  CHECK(a.backbone().checksum() == before);
  for (double v : la) CHECK(std::isfinite(v));
  CHECK(la.back() < la.front());
  CHECK(ta.state().step == 50);
}

TEST_CASE("trainer rejects unseen labels in training") {
  const ModelConfig cfg = small_config();
  SyntheticData s = small_data(cfg);
  Dataset bad = s.data;
  bad.bags[0].labels[2] = 1;  // class 2 is unseen
  bad.bags[0].planted[2] = {0};
  DartModel m(cfg, s.vocab, ClassGraph::isolated(s.vocab.size()));
  CHECK_THROWS_AS(Trainer(m, bad), ContractError);
  Dataset none;
  CHECK_THROWS_AS(Trainer(m, none), ConfigError);
}

TEST_CASE("oracle scores give perfect metrics") {
  const ModelConfig cfg = small_config();
  const SyntheticData s = small_data(cfg);
  const auto test = s.data.split("test");
  const EvalTable t = oracle_table(test, s.vocab.size());
  CHECK(mean_ap(t).map == 1.0);
  CHECK(mean_ap(split_eval(t, EvalMode::kZsl, s.vocab.seen_mask)).map == 1.0);

  DartModel m(cfg, s.vocab, ClassGraph::isolated(s.vocab.size()));
  const EvalReport r = evaluate(m, test, EvalMode::kGzsl, {1, 3});
  CHECK(r.map > 0.0);
  CHECK(r.map <= 1.0);
  const double loc = localization_accuracy(m, test);
  CHECK(loc >= 0.0);
  CHECK(loc <= 1.0);
}

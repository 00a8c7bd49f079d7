#include "dart/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dart/crg.hpp"
#include "dart/dataset.hpp"
#include "dart/error.hpp"
#include "dart/model.hpp"
#include "dart/random.hpp"

namespace dart {

GradcheckConfig GradcheckConfig::from_json(const nlohmann::json& j) {
  GradcheckConfig c;
  try {
    c.classes = j.value("classes", c.classes);
    c.unseen = j.value("unseen", c.unseen);
    c.grid = j.value("grid", c.grid);
    c.d = j.value("d", c.d);
    c.heads = j.value("heads", c.heads);
    c.gat_layers = j.value("gat_layers", c.gat_layers);
    c.rank = j.value("rank", c.rank);
    c.alpha = j.value("alpha", c.alpha);
    c.images = j.value("images", c.images);
    c.k_hard = j.value("k_hard", c.k_hard);
    c.k_patch = j.value("k_patch", c.k_patch);
    c.lambda = j.value("lambda", c.lambda);
    c.step = j.value("step", c.step);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.floor = j.value("floor", c.floor);
    c.param_scale = j.value("param_scale", c.param_scale);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gradcheck config: ") + e.what());
  }
  if (!(c.step > 0) || !(c.tolerance > 0)) throw ConfigError("gradcheck: step and tolerance must be positive");
  if (c.lambda < 0 || c.lambda > 1) throw RangeError("gradcheck: lambda outside [0, 1]");
  return c;
}

ModelConfig GradcheckConfig::model_config() const {
  ModelConfig m;
  m.backbone.d = d;
  m.backbone.d_in = d;
  m.backbone.grid_h = grid;
  m.backbone.grid_w = grid;
  m.backbone.seed = seed;
  m.arm.rank = rank;
  m.arm.alpha = alpha;
  m.atm.heads = heads;
  m.atm.layers = gat_layers;
  m.k_hard = k_hard;
  m.k_patch = k_patch;
  m.neighbors = 3;
  m.seed = seed;
  m.validate();
  return m;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json groups_j = nlohmann::json::array();
  for (const auto& g : groups) {
    groups_j.push_back({{"group", g.name},
                        {"count", g.count},
                        {"max_rel_err", g.max_rel},
                        {"worst_index", g.worst_index},
                        {"analytic", g.analytic},
                        {"numeric", g.numeric}});
  }
  return {{"pass", pass}, {"max_rel_err", max_rel}, {"worst_group", worst_group}, {"seconds", seconds},
          {"groups", groups_j}};
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig mcfg = cfg.model_config();

  SyntheticSpec spec;
  spec.classes = cfg.classes;
  spec.unseen = cfg.unseen;
  spec.images = cfg.images;
  spec.patches = cfg.grid * cfg.grid;
  spec.d_in = cfg.d;
  spec.seed = cfg.seed;
  spec.test_fraction = 0.0;
  spec.max_positives = std::max<Index>(1, std::min<Index>(3, spec.patches / 3));
  spec.max_planted = 3;
  const SyntheticData synth = gen_synthetic_dataset(spec);

  crg::ReplayBackend replay(synth.llm_fixtures);
  crg::MiningOptions mining;
  mining.neighbors = mcfg.neighbors;
  const auto mined = crg::mine_all(synth.vocab.names, synth.vocab.seen_mask, replay, mining);

  DartModel model(mcfg, synth.vocab, mined.graph);
  Rng rng(mix_seed(cfg.seed, 0x6C));
  for (auto& p : model.params().items()) {
    if (p.frozen) continue;
    p.tensor.mutable_value() += randn(p.tensor.rows(), p.tensor.cols(), rng, cfg.param_scale);
  }

  std::vector<BackboneOutput> frozen;
  for (const auto& b : synth.data.bags) frozen.push_back(model.encode(b.patches));
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < frozen.size(); ++i) batch.push_back({&frozen[i], &synth.data.bags[i].labels});

  StepTargets targets;
  (void)total_loss(model, batch, cfg.lambda, &targets);
  model.params().zero_grad();
  backward(total_loss(model, batch, cfg.lambda, nullptr, &targets).total);

  GradcheckReport report;
  for (auto& p : model.params().items()) {
    if (p.frozen) continue;
    const Matrix analytic = p.tensor.grad();
    GradcheckGroup g;
    g.name = p.name;
    Matrix& w = p.tensor.mutable_value();
    for (Index k = 0; k < w.size(); ++k) {
      const double orig = w.data()[k];
      w.data()[k] = orig + cfg.step;
      const double up = total_loss(model, batch, cfg.lambda, nullptr, &targets).total.item();
      w.data()[k] = orig - cfg.step;
      const double down = total_loss(model, batch, cfg.lambda, nullptr, &targets).total.item();
      w.data()[k] = orig;
      const double numeric = (up - down) / (2.0 * cfg.step);
      const double a = analytic.data()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), cfg.floor});
      ++g.count;
      if (rel > g.max_rel || g.count == 1) {
        g.max_rel = rel;
        g.worst_index = k;
        g.analytic = a;
        g.numeric = numeric;
      }
    }
    if (g.max_rel > report.max_rel || report.groups.empty()) {
      report.max_rel = g.max_rel;
      report.worst_group = g.name;
    }
    report.groups.push_back(g);
  }
  report.pass = report.max_rel < cfg.tolerance;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace dart

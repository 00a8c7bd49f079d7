#include "dart/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dart/error.hpp"

namespace dart {

void AdamW::step(ParameterSet& params, double lr) {
  auto& items = params.items();
  if (state_.m.empty()) {
    for (const auto& p : items) {
      state_.m.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      state_.v.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
  if (state_.m.size() != items.size()) {
    throw ContractError("AdamW: optimizer state does not match the parameter set");
  }
  ++state_.t;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.t));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i];
    if (p.frozen) continue;
    const Matrix g = p.tensor.grad();
    Matrix& m = state_.m[i];
    Matrix& v = state_.v[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Matrix& w = p.tensor.mutable_value();
    w -= lr * cfg_.weight_decay * w;
    w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
  }
}

Trainer::Trainer(DartModel& model, const Dataset& data) : model_(model), optimizer_(model.config().optim) {
  const ModelConfig& cfg = model_.config();
  bags_ = data.split("train");
  if (bags_.empty()) throw ConfigError("trainer: dataset has no training images");
  for (const PatchBag* b : bags_) {
    b->validate(model_.vocab().size());
    for (Index c = 0; c < model_.vocab().size(); ++c) {
      if (b->labels[static_cast<std::size_t>(c)] && !model_.vocab().seen_mask[static_cast<std::size_t>(c)]) {
        throw ContractError("trainer: training image " + b->id + " is labeled with unseen class " +
                            model_.vocab().names[static_cast<std::size_t>(c)]);
      }
    }
    cache_.push_back(model_.encode(b->patches));
  }
  const Index n = static_cast<Index>(bags_.size());
  steps_per_epoch_ = std::max<Index>(1, n / std::max<Index>(1, std::min(cfg.batch_size, n)));
  warmup_steps_ = static_cast<Index>(std::llround(cfg.optim.warmup_epochs * static_cast<double>(steps_per_epoch_)));
  state_.rng.seed(mix_seed(cfg.seed, 0x5EED));
}

std::vector<Index> Trainer::next_batch() {
  const Index n = static_cast<Index>(bags_.size());
  const Index b = std::min(model_.config().batch_size, n);
  if (state_.order.empty() || state_.cursor + b > static_cast<Index>(state_.order.size())) {
    state_.order.resize(static_cast<std::size_t>(n));
    std::iota(state_.order.begin(), state_.order.end(), Index{0});
    std::shuffle(state_.order.begin(), state_.order.end(), state_.rng);
    state_.cursor = 0;
  }
  std::vector<Index> out(state_.order.begin() + state_.cursor, state_.order.begin() + state_.cursor + b);
  state_.cursor += b;
  return out;
}

StepLog Trainer::train_step() {
  const ModelConfig& cfg = model_.config();
  StepLog log;
  log.step = state_.step;
  log.lr = learning_rate(state_.step, cfg.steps, warmup_steps_, cfg.optim);
  log.lambda = lambda_schedule(state_.step, cfg.steps, cfg.lambda);
  state_.lambda = log.lambda;

  std::vector<BatchItem> batch;
  for (Index i : next_batch()) {
    batch.push_back({&cache_[static_cast<std::size_t>(i)], &bags_[static_cast<std::size_t>(i)]->labels});
  }
  model_.params().zero_grad();
  const LossTerms terms = total_loss(model_, batch, log.lambda);
  log.total = terms.total.item();
  log.clsf = terms.clsf;
  log.wps = terms.wps;
  log.penalty = terms.penalty;
  log.mean_abs_delta = terms.mean_abs_delta;
  if (!std::isfinite(log.total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << log.step << ": total=" << log.total << " clsf=" << log.clsf
       << " wps=" << log.wps << " penalty=" << log.penalty << " lr=" << log.lr << " lambda=" << log.lambda;
    throw NonFiniteError(os.str());
  }
  backward(terms.total);
  optimizer_.step(model_.params(), log.lr);
  ++state_.step;
  return log;
}

void Trainer::run(const std::function<void(const StepLog&)>& on_step) {
  while (state_.step < model_.config().steps) {
    const StepLog log = train_step();
    if (on_step) on_step(log);
  }
}

EvalTable score_table(const DartModel& model, const std::vector<const PatchBag*>& bags) {
  const Index C = model.vocab().size();
  Matrix scores(static_cast<Index>(bags.size()), C);
  BinaryMatrix truth(static_cast<Index>(bags.size()), C);
  const Tensor h_txt = model.text_features();
  for (std::size_t i = 0; i < bags.size(); ++i) {
    bags[i]->validate(C);
    const auto row = static_cast<Index>(i);
    const ImageForward f = model.forward(model.encode(bags[i]->patches), h_txt);
    scores.row(row) = f.y_hat.value().col(0).transpose();
    for (Index c = 0; c < C; ++c) truth(row, c) = bags[i]->labels[static_cast<std::size_t>(c)];
  }
  return EvalTable::make(std::move(scores), std::move(truth));
}

EvalTable oracle_table(const std::vector<const PatchBag*>& bags, Index num_classes) {
  Matrix scores = Matrix::Zero(static_cast<Index>(bags.size()), num_classes);
  BinaryMatrix truth = BinaryMatrix::Zero(static_cast<Index>(bags.size()), num_classes);
  for (std::size_t i = 0; i < bags.size(); ++i) {
    bags[i]->validate(num_classes);
    for (Index c = 0; c < num_classes; ++c) {
      const auto on = bags[i]->labels[static_cast<std::size_t>(c)];
      truth(static_cast<Index>(i), c) = on;
      scores(static_cast<Index>(i), c) = on ? 1.0 : 0.0;
    }
  }
  return EvalTable::make(std::move(scores), std::move(truth));
}

EvalReport evaluate(const DartModel& model, const std::vector<const PatchBag*>& bags, EvalMode mode,
                    const std::vector<Index>& ks) {
  const EvalTable table = split_eval(score_table(model, bags), mode, model.vocab().seen_mask);
  return make_report(table, mode, ks);
}

double localization_accuracy(const DartModel& model, const std::vector<const PatchBag*>& bags) {
  const ModelConfig& cfg = model.config();
  const Tensor h_txt = model.text_features();
  Index hits = 0;
  Index total = 0;
  for (const PatchBag* b : bags) {
    const ImageForward f = model.forward(model.encode(b->patches), h_txt);
    const Matrix z = responsibilities_model(f.s_tilde.value(), b->labels, cfg.tau);
    for (const auto& [c, planted] : b->planted) {
      Index best = 0;
      z.col(c).maxCoeff(&best);
      ++total;
      if (std::find(planted.begin(), planted.end(), best) != planted.end()) ++hits;
    }
  }
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace dart

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dart/config.hpp"
#include "dart/dataset.hpp"
#include "dart/metrics.hpp"
#include "dart/model.hpp"
#include "dart/parameter.hpp"
#include "dart/random.hpp"

namespace dart {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  Index t = 0;
};

/// Adam with decoupled weight decay. Frozen parameters are never touched.
class AdamW {
 public:
  explicit AdamW(const OptimizerConfig& cfg) : cfg_(cfg) {}

  void step(ParameterSet& params, double lr);

  [[nodiscard]] AdamState& state() { return state_; }
  [[nodiscard]] const AdamState& state() const { return state_; }

 private:
  OptimizerConfig cfg_;
  AdamState state_;
};

struct TrainState {
  Index step = 0;
  double lambda = 1.0;
  Rng rng;
  /// Current epoch permutation of training bags and the position within it.
  std::vector<Index> order;
  Index cursor = 0;
};

struct StepLog {
  Index step = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double clsf = 0.0;
  double wps = 0.0;
  double penalty = 0.0;
  double mean_abs_delta = 0.0;
};

class Trainer {
 public:
  /// Trains on the "train" split of `data`.
  Trainer(DartModel& model, const Dataset& data);

  /// One optimizer step on the next batch. Throws NonFiniteError on a
  /// non-finite loss, naming every loss term.
  StepLog train_step();

  /// Steps until `cfg.steps` is reached; `on_step` sees every log.
  void run(const std::function<void(const StepLog&)>& on_step = {});

  [[nodiscard]] TrainState& state() { return state_; }
  [[nodiscard]] const TrainState& state() const { return state_; }
  [[nodiscard]] AdamW& optimizer() { return optimizer_; }
  [[nodiscard]] const AdamW& optimizer() const { return optimizer_; }
  [[nodiscard]] Index steps_per_epoch() const { return steps_per_epoch_; }
  [[nodiscard]] Index warmup_steps() const { return warmup_steps_; }
  [[nodiscard]] const DartModel& model() const { return model_; }

 private:
  std::vector<Index> next_batch();

  DartModel& model_;
  std::vector<const PatchBag*> bags_;
  std::vector<BackboneOutput> cache_;
  AdamW optimizer_;
  TrainState state_;
  Index steps_per_epoch_ = 1;
  Index warmup_steps_ = 0;
};

/// Model scores over the given bags, one row per bag in order, all classes.
EvalTable score_table(const DartModel& model, const std::vector<const PatchBag*>& bags);

/// Planted-truth indicator scores; a perfect oracle for the metrics path.
EvalTable oracle_table(const std::vector<const PatchBag*>& bags, Index num_classes);

EvalReport evaluate(const DartModel& model, const std::vector<const PatchBag*>& bags, EvalMode mode,
                    const std::vector<Index>& ks);

/// Fraction of positive (image, class) pairs with a planted set whose
/// highest-responsibility patch is planted.
double localization_accuracy(const DartModel& model, const std::vector<const PatchBag*>& bags);

}  // namespace dart

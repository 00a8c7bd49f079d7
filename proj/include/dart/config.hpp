#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "dart/arm.hpp"
#include "dart/atm.hpp"
#include "dart/backbone.hpp"
#include "dart/wps.hpp"

namespace dart {

struct OptimizerConfig {
  double lr_peak = 1e-4;
  double lr_final = 1e-5;
  double warmup_epochs = 2.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Everything that determines a run. Serialized into every checkpoint.
struct ModelConfig {
  BackboneConfig backbone;
  ArmConfig arm;
  AtmConfig atm;
  OptimizerConfig optim;
  LambdaSchedule lambda;

  /// Patch-score temperature, applied as S/τ. 1/14 puts cosine ±1 at logits ±14.
  double tau = 1.0 / 14.0;
  /// Defaults to tau when unset.
  std::optional<double> tau_prior;
  Index k_hard = 16;
  Index k_patch = 16;
  double gamma_wps = 5.0;
  double gamma_penalty = 0.01;
  double margin = 1.0;
  /// CRG in-neighbors per class; recorded here so a run documents its graph.
  Index neighbors = 8;

  Index batch_size = 16;
  Index steps = 500;
  std::uint64_t seed = 0;
  /// Save a checkpoint every this many steps (0 disables).
  Index checkpoint_every = 0;

  bool use_arm = true;
  bool use_atm = true;
  /// false evaluates the untouched initial model (frozen baseline).
  bool train = true;

  [[nodiscard]] double tau_prior_value() const { return tau_prior.value_or(tau); }
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Missing keys take defaults; unknown keys are a ConfigError.
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Learning rate at `step`: linear warm-up reaching the peak at step
/// warmup_steps−1, then cosine decay to lr_final at step total_steps−1.
double learning_rate(Index step, Index total_steps, Index warmup_steps, const OptimizerConfig& cfg);

}  // namespace dart

#include "dart/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <string>

#include "dart/error.hpp"

namespace dart {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ModelConfig::validate() const {
  backbone.validate();
  arm.validate(backbone.d, backbone.depth);
  atm.validate(backbone.d);
  if (!(tau > 0.0)) throw ConfigError("config: tau must be positive");
  if (tau_prior && !(*tau_prior > 0.0)) throw ConfigError("config: tau_prior must be positive");
  if (k_hard < 0) throw ConfigError("config: k_hard must be >= 0");
  if (k_patch < 1) throw ConfigError("config: k_patch must be >= 1");
  if (gamma_wps < 0.0 || gamma_penalty < 0.0) throw ConfigError("config: loss weights must be >= 0");
  if (neighbors < 1) throw ConfigError("config: neighbors must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (steps < 0) throw ConfigError("config: steps must be >= 0");
  if (!(optim.lr_peak > 0.0) || optim.lr_final < 0.0) throw ConfigError("config: bad learning rates");
  if (optim.warmup_epochs < 0.0) throw ConfigError("config: warmup_epochs must be >= 0");
  if (lambda.ramp_fraction <= 0.0 || lambda.ramp_fraction > 1.0) {
    throw ConfigError("config: lambda ramp_fraction must lie in (0, 1]");
  }
  if (lambda.constant < 0.0 || lambda.constant > 1.0) {
    throw ConfigError("config: lambda constant must lie in [0, 1]");
  }
}

json ModelConfig::to_json() const {
  json j;
  j["backbone"] = {{"depth", backbone.depth},       {"d", backbone.d},
                   {"grid_h", backbone.grid_h},     {"grid_w", backbone.grid_w},
                   {"d_in", backbone.d_in},         {"seed", backbone.seed},
                   {"mix_scale", backbone.mix_scale}, {"ffn_scale", backbone.ffn_scale},
                   {"qk_scale", backbone.qk_scale}};
  j["arm"] = {{"rank", arm.rank}, {"alpha", arm.alpha}, {"attach_layers", arm.attach_layers},
              {"kernel", arm.kernel}};
  j["atm"] = {{"heads", atm.heads}, {"layers", atm.layers}, {"slope", atm.slope},
              {"init_gain", atm.init_gain}};
  j["optimizer"] = {{"lr_peak", optim.lr_peak},
                    {"lr_final", optim.lr_final},
                    {"warmup_epochs", optim.warmup_epochs},
                    {"weight_decay", optim.weight_decay},
                    {"beta1", optim.beta1},
                    {"beta2", optim.beta2},
                    {"eps", optim.eps}};
  j["lambda"] = {{"kind", lambda.kind == LambdaSchedule::Kind::kLinear ? "linear" : "constant"},
                 {"constant", lambda.constant},
                 {"ramp_fraction", lambda.ramp_fraction}};
  j["tau"] = tau;
  j["tau_prior"] = tau_prior ? json(*tau_prior) : json(nullptr);
  j["k_hard"] = k_hard;
  j["k_patch"] = k_patch;
  j["gamma_wps"] = gamma_wps;
  j["gamma_penalty"] = gamma_penalty;
  j["margin"] = margin;
  j["neighbors"] = neighbors;
  j["batch_size"] = batch_size;
  j["steps"] = steps;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["use_arm"] = use_arm;
  j["use_atm"] = use_atm;
  j["train"] = train;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    reject_unknown(j,
                   {"backbone", "arm", "atm", "optimizer", "lambda", "tau", "tau_prior", "k_hard",
                    "k_patch", "gamma_wps", "gamma_penalty", "margin", "neighbors", "batch_size",
                    "steps", "seed", "checkpoint_every", "use_arm", "use_atm", "train"},
                   "config");
    if (j.contains("backbone")) {
      const auto& b = j["backbone"];
      reject_unknown(b, {"depth", "d", "grid_h", "grid_w", "d_in", "seed", "mix_scale", "ffn_scale", "qk_scale"},
                     "config.backbone");
      read(b, "depth", c.backbone.depth);
      read(b, "d", c.backbone.d);
      read(b, "grid_h", c.backbone.grid_h);
      read(b, "grid_w", c.backbone.grid_w);
      read(b, "d_in", c.backbone.d_in);
      read(b, "seed", c.backbone.seed);
      read(b, "mix_scale", c.backbone.mix_scale);
      read(b, "ffn_scale", c.backbone.ffn_scale);
      read(b, "qk_scale", c.backbone.qk_scale);
    }
    if (j.contains("arm")) {
      const auto& a = j["arm"];
      reject_unknown(a, {"rank", "alpha", "attach_layers", "kernel"}, "config.arm");
      read(a, "rank", c.arm.rank);
      read(a, "alpha", c.arm.alpha);
      read(a, "attach_layers", c.arm.attach_layers);
      read(a, "kernel", c.arm.kernel);
    }
    if (j.contains("atm")) {
      const auto& a = j["atm"];
      reject_unknown(a, {"heads", "layers", "slope", "init_gain"}, "config.atm");
      read(a, "heads", c.atm.heads);
      read(a, "layers", c.atm.layers);
      read(a, "slope", c.atm.slope);
      read(a, "init_gain", c.atm.init_gain);
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      reject_unknown(o, {"lr_peak", "lr_final", "warmup_epochs", "weight_decay", "beta1", "beta2", "eps"},
                     "config.optimizer");
      read(o, "lr_peak", c.optim.lr_peak);
      read(o, "lr_final", c.optim.lr_final);
      read(o, "warmup_epochs", c.optim.warmup_epochs);
      read(o, "weight_decay", c.optim.weight_decay);
      read(o, "beta1", c.optim.beta1);
      read(o, "beta2", c.optim.beta2);
      read(o, "eps", c.optim.eps);
    }
    if (j.contains("lambda")) {
      const auto& l = j["lambda"];
      reject_unknown(l, {"kind", "constant", "ramp_fraction"}, "config.lambda");
      if (l.contains("kind")) {
        const auto kind = l["kind"].get<std::string>();
        if (kind == "linear") {
          c.lambda.kind = LambdaSchedule::Kind::kLinear;
        } else if (kind == "constant") {
          c.lambda.kind = LambdaSchedule::Kind::kConstant;
        } else {
          throw ConfigError("config.lambda: unknown kind '" + kind + "'");
        }
      }
      read(l, "constant", c.lambda.constant);
      read(l, "ramp_fraction", c.lambda.ramp_fraction);
    }
    read(j, "tau", c.tau);
    if (j.contains("tau_prior") && !j["tau_prior"].is_null()) c.tau_prior = j["tau_prior"].get<double>();
    read(j, "k_hard", c.k_hard);
    read(j, "k_patch", c.k_patch);
    read(j, "gamma_wps", c.gamma_wps);
    read(j, "gamma_penalty", c.gamma_penalty);
    read(j, "margin", c.margin);
    read(j, "neighbors", c.neighbors);
    read(j, "batch_size", c.batch_size);
    read(j, "steps", c.steps);
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "use_arm", c.use_arm);
    read(j, "use_atm", c.use_atm);
    read(j, "train", c.train);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json().dump(2) << "\n";
}

double learning_rate(Index step, Index total_steps, Index warmup_steps, const OptimizerConfig& cfg) {
  if (total_steps <= 1) return cfg.lr_peak;
  warmup_steps = std::clamp<Index>(warmup_steps, 0, total_steps - 1);
  if (warmup_steps > 0 && step < warmup_steps) {
    return cfg.lr_peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const Index start = std::max<Index>(warmup_steps - 1, 0);
  const Index span = total_steps - 1 - start;
  if (span <= 0) return cfg.lr_final;
  const double t = std::clamp(static_cast<double>(step - start) / static_cast<double>(span), 0.0, 1.0);
  return cfg.lr_final + 0.5 * (cfg.lr_peak - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace dart

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dart/config.hpp"

namespace dart {

/// Seeded micro-instance for the end-to-end finite-difference check.
struct GradcheckConfig {
  Index classes = 6;
  Index unseen = 1;
  Index grid = 3;  // N_p = grid²
  Index d = 16;
  Index heads = 2;
  Index gat_layers = 1;
  Index rank = 2;
  double alpha = 4.0;
  Index images = 4;
  Index k_hard = 3;
  Index k_patch = 4;
  double lambda = 0.5;
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Gradients smaller than this are compared in absolute terms.
  double floor = 1e-6;
  /// Std of the random perturbation applied to every trainable parameter.
  double param_scale = 0.2;
  std::uint64_t seed = 11;

  static GradcheckConfig from_json(const nlohmann::json& j);
  [[nodiscard]] ModelConfig model_config() const;
};

struct GradcheckGroup {
  std::string name;
  Index count = 0;
  double max_rel = 0.0;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double max_rel = 0.0;
  std::string worst_group;
  bool pass = false;
  double seconds = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Central differences of the total loss against reverse mode for every trainable
/// entry, with the step's stop-gradient targets held fixed.
GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

}  // namespace dart

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dart/llm_backend.hpp"
#include "dart/tensor.hpp"
#include "dart/wps.hpp"

namespace dart {

/// One image as a bag of raw patch vectors.
struct PatchBag {
  std::string id;
  std::string split = "train";
  Matrix patches;  // N_p×d_in
  Labels labels;
  /// Synthetic ground truth: class id → planted patch indices.
  std::map<Index, std::vector<Index>> planted;

  void validate(Index num_classes) const;
  [[nodiscard]] nlohmann::json to_json() const;
  static PatchBag from_json(const nlohmann::json& j);
};

struct Vocabulary {
  std::vector<std::string> names;
  std::vector<std::uint8_t> seen_mask;
  Matrix embeddings;  // C×d, unit rows

  [[nodiscard]] Index size() const { return static_cast<Index>(names.size()); }
  [[nodiscard]] Index num_unseen() const;
  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
};

struct Dataset {
  std::vector<PatchBag> bags;

  [[nodiscard]] std::vector<const PatchBag*> split(const std::string& name) const;
  [[nodiscard]] const PatchBag& find(const std::string& id) const;
  /// JSON lines, one bag per line.
  void save(const std::filesystem::path& path) const;
  static Dataset load(const std::filesystem::path& path);
};

struct SyntheticSpec {
  Index classes = 10;
  Index unseen = 2;
  Index images = 480;
  Index patches = 16;
  Index d_in = 32;
  /// Per-coordinate std of the noise added to planted prototypes.
  double noise = 0.1;
  std::uint64_t seed = 0;

  double test_fraction = 0.25;
  Index max_positives = 4;
  Index max_planted = 3;
  /// Classes in the same group tend to co-occur.
  Index group_size = 3;
  double cooccur_prob = 0.75;
  /// Weight of the group direction in each prototype, in [0, 1).
  double group_share = 0.6;
  /// Background patch std is this over sqrt(d_in).
  double background = 1.0;
  /// Noise on text anchors before renormalization.
  double text_noise = 0.1;
};

struct SyntheticData {
  Dataset data;
  Vocabulary vocab;
  Matrix prototypes;  // C×d_in, unit rows
  std::vector<Index> group;
  std::vector<crg::QueryLog> llm_fixtures;
};

/// Seeded MIL dataset. Unseen classes are positive only in the test split.
/// `embedding` (d×d_in) maps prototypes into text space; identity when null.
SyntheticData gen_synthetic_dataset(const SyntheticSpec& spec, const Matrix* embedding = nullptr);

/// Scripted LLM replies for a synthetic vocabulary: group-mates among the
/// seen classes come back as High, with random dropouts and stray Low picks.
std::vector<crg::QueryLog> synthetic_llm_fixtures(const Vocabulary& vocab,
                                                  const std::vector<Index>& group, Index queries,
                                                  std::uint64_t seed);

}  // namespace dart

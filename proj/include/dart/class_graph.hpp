#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dart/tensor.hpp"

namespace dart {

/// Directed class graph: information flows into each class from its
/// in-neighbors. Self-loops are implicit and added by graph_edges().
struct ClassGraph {
  Index num_classes = 0;
  std::vector<std::string> names;
  std::vector<std::vector<Index>> in_neighbors;
  std::vector<std::uint8_t> seen_mask;

  /// Throws ConfigError on duplicate, self, or out-of-range neighbor ids.
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static ClassGraph from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ClassGraph load(const std::filesystem::path& path);

  /// Graph with no mined edges; every class attends only to itself.
  static ClassGraph isolated(Index num_classes);
};

/// Flattened edge list over N(c) ∪ {c}: edge e carries information from
/// source[e] into target[e]. Edges are grouped by target, self edge first.
struct GraphEdges {
  Index num_nodes = 0;
  std::vector<Index> target;
  std::vector<Index> source;

  [[nodiscard]] Index size() const { return static_cast<Index>(target.size()); }
};

GraphEdges graph_edges(const ClassGraph& graph);

}  // namespace dart

#include "dart/class_graph.hpp"

#include <fstream>
#include <set>

#include "dart/error.hpp"

namespace dart {

void ClassGraph::validate() const {
  if (static_cast<Index>(in_neighbors.size()) != num_classes) {
    throw ConfigError("class graph: neighbor list count != num_classes");
  }
  if (!names.empty() && static_cast<Index>(names.size()) != num_classes) {
    throw ConfigError("class graph: name count != num_classes");
  }
  if (!seen_mask.empty() && static_cast<Index>(seen_mask.size()) != num_classes) {
    throw ConfigError("class graph: seen mask length != num_classes");
  }
  for (Index c = 0; c < num_classes; ++c) {
    std::set<Index> seen;
    for (Index j : in_neighbors[static_cast<std::size_t>(c)]) {
      if (j < 0 || j >= num_classes) {
        throw ConfigError("class graph: neighbor id " + std::to_string(j) + " of class " +
                          std::to_string(c) + " out of range");
      }
      if (j == c) {
        throw ConfigError("class graph: explicit self neighbor on class " + std::to_string(c));
      }
      if (!seen.insert(j).second) {
        throw ConfigError("class graph: duplicate neighbor " + std::to_string(j) +
                          " on class " + std::to_string(c));
      }
    }
  }
}

nlohmann::json ClassGraph::to_json() const {
  nlohmann::json j;
  j["num_classes"] = num_classes;
  j["names"] = names;
  j["in_neighbors"] = in_neighbors;
  std::vector<bool> mask(seen_mask.begin(), seen_mask.end());
  j["seen_mask"] = mask;
  return j;
}

ClassGraph ClassGraph::from_json(const nlohmann::json& j) {
  ClassGraph g;
  try {
    g.num_classes = j.at("num_classes").get<Index>();
    g.names = j.value("names", std::vector<std::string>{});
    g.in_neighbors = j.at("in_neighbors").get<std::vector<std::vector<Index>>>();
    for (bool b : j.value("seen_mask", std::vector<bool>{})) g.seen_mask.push_back(b ? 1 : 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("class graph: malformed JSON: ") + e.what());
  }
  g.validate();
  return g;
}

void ClassGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write graph file " + path.string());
  out << to_json().dump(2) << "\n";
}

ClassGraph ClassGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read graph file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("graph file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

ClassGraph ClassGraph::isolated(Index num_classes) {
  ClassGraph g;
  g.num_classes = num_classes;
  g.in_neighbors.resize(static_cast<std::size_t>(num_classes));
  g.seen_mask.assign(static_cast<std::size_t>(num_classes), 1);
  for (Index c = 0; c < num_classes; ++c) g.names.push_back("class" + std::to_string(c));
  return g;
}

GraphEdges graph_edges(const ClassGraph& graph) {
  graph.validate();
  GraphEdges e;
  e.num_nodes = graph.num_classes;
  for (Index c = 0; c < graph.num_classes; ++c) {
    e.target.push_back(c);
    e.source.push_back(c);
    for (Index j : graph.in_neighbors[static_cast<std::size_t>(c)]) {
      e.target.push_back(c);
      e.source.push_back(j);
    }
  }
  return e;
}

}  // namespace dart

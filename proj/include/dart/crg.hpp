#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dart/class_graph.hpp"
#include "dart/llm_backend.hpp"

namespace dart::crg {

enum class RelationType { kSynonymy, kIsA, kFunctional, kCooccurrence, kPartWhole };
enum class Strength { kHigh, kMedium, kLow };

std::string to_string(RelationType t);
std::string to_string(Strength s);
/// Accepts the labels used in prompts and responses; nullopt for anything else.
std::optional<RelationType> parse_relation_type(const std::string& text);
std::optional<Strength> parse_strength(const std::string& text);
/// High → 1.0, Medium → 0.6, Low → 0.3.
double strength_value(Strength s);

struct RelationRecord {
  std::string target;
  std::string related;
  RelationType rel_type = RelationType::kSynonymy;
  Strength strength = Strength::kLow;
  std::string explanation;
  Index query_index = 0;

  [[nodiscard]] nlohmann::json to_json() const;
  static RelationRecord from_json(const nlohmann::json& j);
};

struct AggregatedEdge {
  std::string target;
  std::string related;
  double score = 0.0;
};

struct ParseResult {
  std::vector<RelationRecord> records;
  /// Blocks dropped for an unknown type, unknown strength, or missing fields.
  Index skipped = 0;
  /// Set when nothing parsable was found.
  bool warning = false;
};

/// Fills the relationship-mining prompt for one class.
std::string render_prompt(const std::string& new_class, const std::vector<std::string>& seen_classes);

/// Line-oriented, tolerant parse of "Related Category N: name" blocks.
ParseResult parse_response(const std::string& raw, const std::string& target, Index query_index = 0);

/// Mean mapped strength per related class over `num_queries` queries; a
/// query that does not mention the class contributes 0. Sorted by name.
std::vector<AggregatedEdge> aggregate(const std::vector<RelationRecord>& records, Index num_queries);

/// Keeps the N best-scoring known neighbors per class (ties by name).
ClassGraph build_graph(const std::vector<std::string>& names, const std::vector<std::uint8_t>& seen_mask,
                       const std::vector<std::vector<AggregatedEdge>>& edges_per_class, Index top_n);

struct MiningOptions {
  Index queries = 3;
  double top_p = 0.3;
  Index neighbors = 8;
  /// Upper bound on concurrent backend calls.
  Index max_in_flight = 4;
};

struct MiningResult {
  std::vector<QueryLog> logs;
  std::vector<RelationRecord> records;
  Index skipped = 0;
  ClassGraph graph;
};

/// Queries every class against the seen classes, parses, aggregates, and
/// builds the graph. Output order is fixed by (class, query) regardless of
/// completion order.
MiningResult mine_all(const std::vector<std::string>& names, const std::vector<std::uint8_t>& seen_mask,
                      LlmBackend& backend, const MiningOptions& options);

void write_relations(const std::filesystem::path& path, const std::vector<RelationRecord>& records);
std::vector<RelationRecord> read_relations(const std::filesystem::path& path);

}  // namespace dart::crg

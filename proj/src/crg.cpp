#include "dart/crg.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <map>
#include <fstream>
#include <regex>
#include <set>

#include "dart/error.hpp"

namespace dart::crg {

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Drops markdown emphasis and list markers so "- **Type of Relationship**: X"
// and "Type of Relationship: X" read the same.
std::string strip_markup(const std::string& line) {
  std::string s;
  for (char ch : line) {
    if (ch != '*' && ch != '`' && ch != '\\') s.push_back(ch);
  }
  s = trim(s);
  while (!s.empty() && (s.front() == '-' || s.front() == '+' || s.front() == '>')) {
    s = trim(s.substr(1));
  }
  if (s.rfind("\xE2\x80\xA2", 0) == 0) s = trim(s.substr(3));  // bullet •
  return s;
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

constexpr const char* kPromptTemplate =
    "Based on the following list of known categories, please identify all categories that have a "
    "direct relationship with the new category **{New Category}**. For each related category, "
    "provide the type of relationship, the association strength (**High**, **Medium**, **Low**), "
    "and an explanation.\n"
    "\n"
    "### Types of Relationships\n"
    "\n"
    "1. **Synonymy/Similarity**: Two categories are conceptually very similar or synonymous.\n"
    "2. **Is-a/Hypernym**: One category is a superordinate or subordinate concept of the other.\n"
    "3. **Functional Relationship**: The function or use of one category is related to the other.\n"
    "4. **Co-occurrence**: Two categories often appear in the same context or environment.\n"
    "5. **Part-Whole Relationship**: One category is a component of the other.\n"
    "\n"
    "### Instructions\n"
    "\n"
    "Please provide the information for each relevant category in the following format:\n"
    "\n"
    "**Related Category [Number]: [Category Name]**\n"
    "- **Type of Relationship**: [Relationship Type]\n"
    "- **Association Strength**: High / Medium / Low\n"
    "- **Explanation**: [Brief explanation of the relationship and the reason for the assigned "
    "strength]\n"
    "\n"
    "### Example\n"
    "\n"
    "**New Category**: Nature\n"
    "\n"
    "**List of Seen Categories**:\n"
    "natural, fauna, wildlife, flora, scenic, outdoors, cliff, blossoms, insect, wild, plant, "
    "scenery, blooms, gardens, landscapes\n"
    "\n"
    "**Example Output**:\n"
    "\n"
    "- **Related Category 1: natural**\n"
    "  - **Type of Relationship**: Synonymy/Similarity\n"
    "  - **Association Strength**: High\n"
    "  - **Explanation**: \"Natural\" is conceptually very similar to \"nature\" as both refer to "
    "elements of the physical world not created by humans.\n"
    "- **Related Category 2: fauna**\n"
    "  - **Type of Relationship**: Is-a/Hypernym\n"
    "  - **Association Strength**: High\n"
    "  - **Explanation**: \"Fauna\" represents the animal life of a region, which is a fundamental "
    "part of \"nature\".\n"
    "- **...**\n"
    "\n"
    "Using the format and example provided above, identify all categories from the list of known "
    "categories that have a direct relationship with the new category **{New Category}**. For "
    "each related category, specify:\n"
    "\n"
    "**List of Seen Categories**:\n"
    "\n"
    "{List of Seen Categories}\n"
    "\n"
    "Focus on associations that would be most relevant for understanding or classifying "
    "**{New Category}** within this domain.\n";

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string to_string(RelationType t) {
  switch (t) {
    case RelationType::kSynonymy: return "Synonymy";
    case RelationType::kIsA: return "IsA";
    case RelationType::kFunctional: return "Functional";
    case RelationType::kCooccurrence: return "Cooccurrence";
    case RelationType::kPartWhole: return "PartWhole";
  }
  return "Synonymy";
}

std::string to_string(Strength s) {
  switch (s) {
    case Strength::kHigh: return "High";
    case Strength::kMedium: return "Medium";
    case Strength::kLow: return "Low";
  }
  return "Low";
}

std::optional<RelationType> parse_relation_type(const std::string& text) {
  std::string key;
  for (char ch : lower(strip_markup(text))) {
    if (ch != ' ' && ch != '-' && ch != '_') key.push_back(ch);
  }
  while (!key.empty() && key.back() == '.') key.pop_back();
  static const std::map<std::string, RelationType> table = {
      {"synonymy/similarity", RelationType::kSynonymy},
      {"synonymy", RelationType::kSynonymy},
      {"synonym", RelationType::kSynonymy},
      {"similarity", RelationType::kSynonymy},
      {"isa/hypernym", RelationType::kIsA},
      {"isa/hypernymy/hyponymy", RelationType::kIsA},
      {"isa/hyponym", RelationType::kIsA},
      {"isa", RelationType::kIsA},
      {"hypernym", RelationType::kIsA},
      {"hypernymy", RelationType::kIsA},
      {"hyponym", RelationType::kIsA},
      {"hyponymy", RelationType::kIsA},
      {"functionalrelationship", RelationType::kFunctional},
      {"functional", RelationType::kFunctional},
      {"cooccurrence", RelationType::kCooccurrence},
      {"partwholerelationship", RelationType::kPartWhole},
      {"partwhole", RelationType::kPartWhole},
  };
  auto it = table.find(key);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::optional<Strength> parse_strength(const std::string& text) {
  std::string key = lower(strip_markup(text));
  while (!key.empty() && key.back() == '.') key.pop_back();
  key = trim(key);
  if (key == "high") return Strength::kHigh;
  if (key == "medium") return Strength::kMedium;
  if (key == "low") return Strength::kLow;
  return std::nullopt;
}

double strength_value(Strength s) {
  switch (s) {
    case Strength::kHigh: return 1.0;
    case Strength::kMedium: return 0.6;
    case Strength::kLow: return 0.3;
  }
  return 0.0;
}

nlohmann::json RelationRecord::to_json() const {
  return nlohmann::json{{"target", target},
                        {"related", related},
                        {"type", to_string(rel_type)},
                        {"strength", to_string(strength)},
                        {"explanation", explanation},
                        {"query_index", query_index}};
}

RelationRecord RelationRecord::from_json(const nlohmann::json& j) {
  RelationRecord r;
  try {
    r.target = j.at("target").get<std::string>();
    r.related = j.at("related").get<std::string>();
    const auto type = parse_relation_type(j.at("type").get<std::string>());
    const auto strength = parse_strength(j.at("strength").get<std::string>());
    if (!type || !strength) throw ConfigError("relation record: unknown type or strength");
    r.rel_type = *type;
    r.strength = *strength;
    r.explanation = j.value("explanation", "");
    r.query_index = j.value("query_index", Index{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("relation record: ") + e.what());
  }
  return r;
}

std::string render_prompt(const std::string& new_class, const std::vector<std::string>& seen_classes) {
  if (seen_classes.empty()) {
    throw ConfigError("render_prompt: the list of known categories is empty");
  }
  std::string list;
  for (std::size_t i = 0; i < seen_classes.size(); ++i) {
    if (i > 0) list += ", ";
    list += seen_classes[i];
  }
  std::string prompt = kPromptTemplate;
  replace_all(prompt, "{New Category}", new_class);
  replace_all(prompt, "{List of Seen Categories}", list);
  return prompt;
}

ParseResult parse_response(const std::string& raw, const std::string& target, Index query_index) {
  static const std::regex header(R"(^related\s+category\s*(\d+)?\s*:\s*(.*)$)", std::regex::icase);
  static const std::regex field(R"(^(type\s+of\s+relationship|association\s+strength|explanation)\s*:\s*(.*)$)",
                                std::regex::icase);
  ParseResult out;

  struct Block {
    std::string related;
    std::optional<std::string> type;
    std::optional<std::string> strength;
    std::string explanation;
  };
  std::optional<Block> block;

  auto flush = [&]() {
    if (!block) return;
    const Block b = *block;
    block.reset();
    const std::string name = strip_quotes(b.related);
    if (name.empty() || name == "..." || name == "[Category Name]") return;
    const auto type = b.type ? parse_relation_type(*b.type) : std::nullopt;
    const auto strength = b.strength ? parse_strength(*b.strength) : std::nullopt;
    if (!type || !strength || lower(name) == lower(target)) {
      ++out.skipped;
      return;
    }
    out.records.push_back({target, name, *type, *strength, trim(b.explanation), query_index});
  };

  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find('\n', start);
    if (end == std::string::npos) end = raw.size();
    const std::string line = strip_markup(raw.substr(start, end - start));
    start = end + 1;
    std::smatch m;
    if (std::regex_match(line, m, header)) {
      flush();
      block = Block{trim(m[2].str()), std::nullopt, std::nullopt, ""};
    } else if (block && std::regex_match(line, m, field)) {
      const std::string key = lower(m[1].str());
      if (key.starts_with("type")) {
        block->type = trim(m[2].str());
      } else if (key.starts_with("association")) {
        block->strength = trim(m[2].str());
      } else {
        block->explanation = trim(m[2].str());
      }
    }
    if (end == raw.size()) break;
  }
  flush();
  out.warning = out.records.empty();
  return out;
}

std::vector<AggregatedEdge> aggregate(const std::vector<RelationRecord>& records, Index num_queries) {
  if (num_queries < 1) throw ConfigError("aggregate: query count must be >= 1");
  // related → per-query best strength
  std::map<std::string, std::map<Index, double>> best;
  std::string target;
  for (const auto& r : records) {
    target = r.target;
    auto& slot = best[r.related][r.query_index];
    slot = std::max(slot, strength_value(r.strength));
  }
  std::vector<AggregatedEdge> out;
  for (const auto& [related, per_query] : best) {
    double total = 0.0;
    for (const auto& [q, v] : per_query) {
      if (q >= 0 && q < num_queries) total += v;
    }
    out.push_back({target, related, total / static_cast<double>(num_queries)});
  }
  return out;
}

ClassGraph build_graph(const std::vector<std::string>& names, const std::vector<std::uint8_t>& seen_mask,
                       const std::vector<std::vector<AggregatedEdge>>& edges_per_class, Index top_n) {
  if (top_n < 1) throw ConfigError("build_graph: N must be >= 1");
  if (edges_per_class.size() != names.size()) {
    throw DimensionError("build_graph: edge lists do not match the vocabulary");
  }
  std::map<std::string, Index> ids;
  for (std::size_t i = 0; i < names.size(); ++i) ids[lower(names[i])] = static_cast<Index>(i);

  ClassGraph g;
  g.num_classes = static_cast<Index>(names.size());
  g.names = names;
  g.seen_mask = seen_mask;
  g.in_neighbors.resize(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<std::pair<const AggregatedEdge*, Index>> cands;
    std::set<Index> used;
    for (const auto& e : edges_per_class[c]) {
      auto it = ids.find(lower(e.related));
      if (it == ids.end() || it->second == static_cast<Index>(c) || e.score <= 0.0) continue;
      if (!used.insert(it->second).second) continue;
      cands.emplace_back(&e, it->second);
    }
    std::stable_sort(cands.begin(), cands.end(), [&](const auto& a, const auto& b) {
      if (a.first->score != b.first->score) return a.first->score > b.first->score;
      return names[static_cast<std::size_t>(a.second)] < names[static_cast<std::size_t>(b.second)];
    });
    if (static_cast<Index>(cands.size()) > top_n) cands.resize(static_cast<std::size_t>(top_n));
    for (const auto& [e, id] : cands) g.in_neighbors[c].push_back(id);
  }
  g.validate();
  return g;
}

MiningResult mine_all(const std::vector<std::string>& names, const std::vector<std::uint8_t>& seen_mask,
                      LlmBackend& backend, const MiningOptions& options) {
  if (names.empty()) throw ConfigError("mine_all: empty vocabulary");
  if (seen_mask.size() != names.size()) throw DimensionError("mine_all: seen mask length mismatch");
  if (options.queries < 1) throw ConfigError("mine_all: queries must be >= 1");

  struct Job {
    std::size_t cls;
    Index query;
    LlmRequest request;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<std::string> known;
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j != c && seen_mask[j]) known.push_back(names[j]);
    }
    if (known.empty()) throw ConfigError("mine_all: no known categories to relate '" + names[c] + "' to");
    const std::string prompt = render_prompt(names[c], known);
    for (Index q = 0; q < options.queries; ++q) {
      jobs.push_back({c, q, LlmRequest{names[c], q, prompt, options.top_p}});
    }
  }

  std::vector<std::string> raw(jobs.size());
  const std::size_t width =
      backend.concurrent() ? static_cast<std::size_t>(std::max<Index>(1, options.max_in_flight)) : 1;
  for (std::size_t begin = 0; begin < jobs.size(); begin += width) {
    const std::size_t end = std::min(jobs.size(), begin + width);
    if (width == 1) {
      raw[begin] = backend.complete(jobs[begin].request);
      continue;
    }
    std::vector<std::future<std::string>> wave;
    for (std::size_t i = begin; i < end; ++i) {
      wave.push_back(std::async(std::launch::async, [&backend, &jobs, i] {
        return backend.complete(jobs[i].request);
      }));
    }
    for (std::size_t i = begin; i < end; ++i) raw[i] = wave[i - begin].get();
  }

  MiningResult result;
  std::vector<std::vector<RelationRecord>> per_class(names.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto parsed = parse_response(raw[i], names[jobs[i].cls], jobs[i].query);
    QueryLog log{names[jobs[i].cls], jobs[i].query, raw[i], parsed.warning ? "empty" : "ok"};
    if (!parsed.warning && parsed.skipped > 0) log.status = "partial";
    result.logs.push_back(std::move(log));
    result.skipped += parsed.skipped;
    for (const auto& r : parsed.records) {
      result.records.push_back(r);
      per_class[jobs[i].cls].push_back(r);
    }
  }
  std::vector<std::vector<AggregatedEdge>> edges;
  for (const auto& recs : per_class) edges.push_back(aggregate(recs, options.queries));
  result.graph = build_graph(names, seen_mask, edges, options.neighbors);
  return result;
}

void write_relations(const std::filesystem::path& path, const std::vector<RelationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write relations file " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << "\n";
}

std::vector<RelationRecord> read_relations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read relations file " + path.string());
  std::vector<RelationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(RelationRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace dart::crg

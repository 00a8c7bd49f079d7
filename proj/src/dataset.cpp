#include "dart/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dart/backbone.hpp"
#include "dart/error.hpp"
#include "dart/random.hpp"

namespace dart {

using nlohmann::json;

void PatchBag::validate(Index num_classes) const {
  if (static_cast<Index>(labels.size()) != num_classes) {
    throw DimensionError("bag " + id + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(num_classes) + " classes");
  }
  for (const auto& [c, idx] : planted) {
    if (c < 0 || c >= num_classes || !labels[static_cast<std::size_t>(c)]) {
      throw ContractError("bag " + id + ": planted class " + std::to_string(c) + " is not a positive label");
    }
    if (idx.empty()) throw ContractError("bag " + id + ": empty planted set");
    for (Index i : idx) {
      if (i < 0 || i >= patches.rows()) throw RangeError("bag " + id + ": planted index out of range");
    }
  }
}

json PatchBag::to_json() const {
  json rows = json::array();
  for (Index i = 0; i < patches.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < patches.cols(); ++j) row.push_back(patches(i, j));
    rows.push_back(std::move(row));
  }
  json pl = json::object();
  for (const auto& [c, idx] : planted) pl[std::to_string(c)] = idx;
  std::vector<int> lab(labels.begin(), labels.end());
  return json{{"id", id}, {"split", split}, {"patches", rows}, {"labels", lab}, {"planted", pl}};
}

PatchBag PatchBag::from_json(const json& j) {
  PatchBag b;
  try {
    b.id = j.at("id").get<std::string>();
    b.split = j.value("split", "train");
    const auto& rows = j.at("patches");
    const Index n = static_cast<Index>(rows.size());
    const Index w = n > 0 ? static_cast<Index>(rows.at(0).size()) : 0;
    b.patches.resize(n, w);
    for (Index i = 0; i < n; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Index>(row.size()) != w) throw DimensionError("bag " + b.id + ": ragged patch rows");
      for (Index k = 0; k < w; ++k) b.patches(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    for (int v : j.at("labels").get<std::vector<int>>()) {
      if (v != 0 && v != 1) throw InvalidValueError("bag " + b.id + ": labels must be 0 or 1");
      b.labels.push_back(static_cast<std::uint8_t>(v));
    }
    if (j.contains("planted")) {
      for (const auto& [key, idx] : j.at("planted").items()) {
        b.planted[std::stol(key)] = idx.get<std::vector<Index>>();
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed bag record: ") + e.what());
  }
  return b;
}

Index Vocabulary::num_unseen() const {
  return static_cast<Index>(std::count(seen_mask.begin(), seen_mask.end(), std::uint8_t{0}));
}

void Vocabulary::validate() const {
  if (names.empty()) throw ConfigError("vocabulary: no classes");
  if (seen_mask.size() != names.size() || embeddings.rows() != size()) {
    throw DimensionError("vocabulary: names, seen_mask and embeddings disagree in length");
  }
  for (Index c = 0; c < size(); ++c) {
    if (std::abs(embeddings.row(c).norm() - 1.0) > 1e-9) {
      throw InvalidValueError("vocabulary: embedding of '" + names[static_cast<std::size_t>(c)] +
                              "' is not unit norm");
    }
  }
}

json Vocabulary::to_json() const {
  json emb = json::array();
  for (Index c = 0; c < embeddings.rows(); ++c) {
    json row = json::array();
    for (Index k = 0; k < embeddings.cols(); ++k) row.push_back(embeddings(c, k));
    emb.push_back(std::move(row));
  }
  std::vector<int> seen(seen_mask.begin(), seen_mask.end());
  return json{{"names", names}, {"seen_mask", seen}, {"embeddings", emb}};
}

Vocabulary Vocabulary::from_json(const json& j) {
  Vocabulary v;
  try {
    v.names = j.at("names").get<std::vector<std::string>>();
    for (int s : j.at("seen_mask").get<std::vector<int>>()) v.seen_mask.push_back(s ? 1 : 0);
    const auto rows = j.at("embeddings").get<std::vector<std::vector<double>>>();
    const Index d = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
    v.embeddings.resize(static_cast<Index>(rows.size()), d);
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (static_cast<Index>(rows[c].size()) != d) throw DimensionError("vocabulary: ragged embeddings");
      for (Index k = 0; k < d; ++k) v.embeddings(static_cast<Index>(c), k) = rows[c][static_cast<std::size_t>(k)];
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("vocabulary: ") + e.what());
  }
  v.validate();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  out << to_json().dump() << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<const PatchBag*> Dataset::split(const std::string& name) const {
  std::vector<const PatchBag*> out;
  for (const auto& b : bags) {
    if (name.empty() || b.split == name) out.push_back(&b);
  }
  return out;
}

const PatchBag& Dataset::find(const std::string& id) const {
  for (const auto& b : bags) {
    if (b.id == id) return b;
  }
  throw LookupError("no image with id '" + id + "'");
}

void Dataset::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& b : bags) out << b.to_json().dump() << "\n";
}

Dataset Dataset::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset " + path.string());
  Dataset d;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.bags.push_back(PatchBag::from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

namespace {

std::string class_name(Index c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "class%02ld", static_cast<long>(c));
  return buf;
}

Index pick(const std::vector<Index>& from, Rng& rng) {
  return from[static_cast<std::size_t>(uniform_index(rng, 0, static_cast<Index>(from.size()) - 1))];
}

}  // namespace

SyntheticData gen_synthetic_dataset(const SyntheticSpec& spec, const Matrix* embedding) {
  if (spec.classes < 1) throw ConfigError("gen-data: need at least one class");
  if (spec.unseen < 0 || spec.unseen >= spec.classes) {
    throw ConfigError("gen-data: unseen count must lie in [0, classes)");
  }
  if (spec.images < 1 || spec.patches < 1 || spec.d_in < 1) {
    throw ConfigError("gen-data: images, patches and d_in must be >= 1");
  }
  if (spec.max_positives < 1 || spec.max_planted < 1 || spec.group_size < 1) {
    throw ConfigError("gen-data: max_positives, max_planted and group_size must be >= 1");
  }
  if (spec.max_positives * spec.max_planted > spec.patches) {
    throw ConfigError("gen-data: " + std::to_string(spec.max_positives) + " positives x " +
                      std::to_string(spec.max_planted) + " planted patches do not fit in " +
                      std::to_string(spec.patches) + " patches");
  }
  if (spec.noise < 0.0) throw ConfigError("gen-data: noise must be >= 0");
  if (spec.group_share < 0.0 || spec.group_share >= 1.0) throw ConfigError("gen-data: group_share must lie in [0, 1)");
  if (embedding && embedding->cols() != spec.d_in) {
    throw DimensionError("gen-data: embedding width does not match d_in");
  }

  const Index C = spec.classes;
  SyntheticData out;
  out.group.resize(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) out.group[static_cast<std::size_t>(c)] = c / spec.group_size;

  // Unseen classes: the last member of successive groups, so each has seen group-mates.
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(C), 1);
  {
    Index chosen = 0;
    const Index groups = (C + spec.group_size - 1) / spec.group_size;
    for (Index g = 0; g < groups && chosen < spec.unseen; ++g) {
      const Index last = std::min(C, (g + 1) * spec.group_size) - 1;
      if (last > g * spec.group_size) {
        seen[static_cast<std::size_t>(last)] = 0;
        ++chosen;
      }
    }
    for (Index c = C - 1; c >= 0 && chosen < spec.unseen; --c) {
      if (seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = 0;
        ++chosen;
      }
    }
  }

  Rng proto_rng(mix_seed(spec.seed, 1));
  out.prototypes = randn(C, spec.d_in, proto_rng);
  out.prototypes.rowwise().normalize();
  if (spec.group_share > 0.0) {
    // Group-mates share a direction, so their patches are confusable.
    const Index groups = (C + spec.group_size - 1) / spec.group_size;
    Matrix shared = randn(groups, spec.d_in, proto_rng);
    shared.rowwise().normalize();
    const double a = std::sqrt(spec.group_share);
    const double b = std::sqrt(1.0 - spec.group_share);
    for (Index c = 0; c < C; ++c) {
      out.prototypes.row(c) = a * shared.row(out.group[static_cast<std::size_t>(c)]) + b * out.prototypes.row(c);
    }
    out.prototypes.rowwise().normalize();
  }

  const Index d = embedding ? embedding->rows() : spec.d_in;
  out.vocab.embeddings.resize(C, d);
  for (Index c = 0; c < C; ++c) {
    out.vocab.names.push_back(class_name(c));
    const Vector anchor = embedding ? Vector(*embedding * out.prototypes.row(c).transpose())
                                    : Vector(out.prototypes.row(c).transpose());
    out.vocab.embeddings.row(c) = text_embed_anchored(c, C, anchor, spec.text_noise, spec.seed).transpose();
  }
  out.vocab.seen_mask = seen;

  std::vector<Index> all(static_cast<std::size_t>(C));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> seen_ids;
  for (Index c = 0; c < C; ++c) {
    if (seen[static_cast<std::size_t>(c)]) seen_ids.push_back(c);
  }

  const auto n_test = static_cast<Index>(std::llround(static_cast<double>(spec.images) * spec.test_fraction));
  const Index n_train = spec.images - n_test;
  Rng rng(mix_seed(spec.seed, 2));
  const double bg_std = spec.background / std::sqrt(static_cast<double>(spec.d_in));

  for (Index n = 0; n < spec.images; ++n) {
    PatchBag bag;
    const bool train = n < n_train;
    char id[32];
    std::snprintf(id, sizeof(id), "img%05ld", static_cast<long>(n));
    bag.id = id;
    bag.split = train ? "train" : "test";
    const std::vector<Index>& allowed = train ? seen_ids : all;

    const Index k = std::min<Index>(uniform_index(rng, 1, spec.max_positives), static_cast<Index>(allowed.size()));
    std::vector<Index> pos{pick(allowed, rng)};
    const Index g0 = out.group[static_cast<std::size_t>(pos.front())];
    while (static_cast<Index>(pos.size()) < k) {
      std::vector<Index> mates;
      std::vector<Index> rest;
      for (Index c : allowed) {
        if (std::find(pos.begin(), pos.end(), c) != pos.end()) continue;
        (out.group[static_cast<std::size_t>(c)] == g0 ? mates : rest).push_back(c);
      }
      if (!mates.empty() && (rest.empty() || uniform01(rng) < spec.cooccur_prob)) {
        pos.push_back(pick(mates, rng));
      } else if (!rest.empty()) {
        pos.push_back(pick(rest, rng));
      } else {
        break;
      }
    }
    std::sort(pos.begin(), pos.end());

    bag.patches = randn(spec.patches, spec.d_in, rng, bg_std);
    bag.labels.assign(static_cast<std::size_t>(C), 0);
    std::vector<Index> slots(static_cast<std::size_t>(spec.patches));
    std::iota(slots.begin(), slots.end(), Index{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    std::size_t next = 0;
    for (Index c : pos) {
      bag.labels[static_cast<std::size_t>(c)] = 1;
      const Index m = uniform_index(rng, 1, spec.max_planted);
      std::vector<Index> where;
      for (Index r = 0; r < m; ++r) {
        const Index i = slots[next++];
        bag.patches.row(i) = out.prototypes.row(c) + randn(1, spec.d_in, rng, spec.noise);
        where.push_back(i);
      }
      std::sort(where.begin(), where.end());
      bag.planted[c] = std::move(where);
    }
    out.data.bags.push_back(std::move(bag));
  }
  out.llm_fixtures = synthetic_llm_fixtures(out.vocab, out.group, 3, spec.seed);
  return out;
}

std::vector<crg::QueryLog> synthetic_llm_fixtures(const Vocabulary& vocab, const std::vector<Index>& group,
                                                  Index queries, std::uint64_t seed) {
  if (static_cast<Index>(group.size()) != vocab.size()) {
    throw DimensionError("synthetic fixtures: group list does not match vocabulary");
  }
  std::vector<crg::QueryLog> logs;
  const Index C = vocab.size();
  for (Index c = 0; c < C; ++c) {
    std::vector<Index> mates;
    std::vector<Index> others;
    for (Index j = 0; j < C; ++j) {
      if (j == c || !vocab.seen_mask[static_cast<std::size_t>(j)]) continue;
      (group[static_cast<std::size_t>(j)] == group[static_cast<std::size_t>(c)] ? mates : others).push_back(j);
    }
    for (Index q = 0; q < queries; ++q) {
      Rng rng(mix_seed(seed, 0xF1000 + static_cast<std::uint64_t>(c * 131 + q)));
      std::vector<std::pair<Index, std::string>> picks;
      for (Index j : mates) {
        if (uniform01(rng) < 0.85) picks.emplace_back(j, "High");
      }
      if (!others.empty() && uniform01(rng) < 0.4) picks.emplace_back(pick(others, rng), "Low");

      std::ostringstream os;
      const std::string& name = vocab.names[static_cast<std::size_t>(c)];
      if (picks.empty()) {
        os << "None of the listed categories has a direct relationship with " << name << ".\n";
      } else {
        os << "Here are the categories related to **" << name << "**:\n\n";
      }
      for (std::size_t i = 0; i < picks.size(); ++i) {
        const auto& other = vocab.names[static_cast<std::size_t>(picks[i].first)];
        const bool strong = picks[i].second == "High";
        os << "- **Related Category " << (i + 1) << ": " << other << "**\n"
           << "  - **Type of Relationship**: " << (strong ? "Co-occurrence" : "Functional Relationship") << "\n"
           << "  - **Association Strength**: " << picks[i].second << "\n"
           << "  - **Explanation**: " << other << (strong ? " usually appears alongside " : " is loosely tied to ")
           << name << ".\n";
      }
      logs.push_back({name, q, os.str(), "ok"});
    }
  }
  return logs;
}

}  // namespace dart

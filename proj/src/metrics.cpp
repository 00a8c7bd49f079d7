#include "dart/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "dart/error.hpp"

namespace dart {

EvalTable EvalTable::make(Matrix scores, BinaryMatrix truth) {
  EvalTable t;
  t.scores = std::move(scores);
  t.truth = std::move(truth);
  t.class_mask.assign(static_cast<std::size_t>(t.scores.cols()), 1);
  t.class_ids.resize(static_cast<std::size_t>(t.scores.cols()));
  std::iota(t.class_ids.begin(), t.class_ids.end(), Index{0});
  t.validate();
  return t;
}

void EvalTable::validate() const {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
    throw DimensionError("eval table: score and truth shapes differ");
  }
  if (static_cast<Index>(class_mask.size()) != scores.cols() ||
      static_cast<Index>(class_ids.size()) != scores.cols()) {
    throw DimensionError("eval table: class mask/ids length != class count");
  }
}

std::optional<double> average_precision(const Vector& scores,
                                        const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& truth) {
  if (scores.size() != truth.size()) {
    throw DimensionError("average_precision: score/truth lengths differ");
  }
  const Index positives = truth.cast<Index>().sum();
  if (positives == 0) return std::nullopt;
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores(a) > scores(b); });
  double acc = 0.0;
  Index hits = 0;
  for (std::size_t n = 0; n < order.size(); ++n) {
    if (truth(order[n])) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(n + 1);
    }
  }
  return acc / static_cast<double>(positives);
}

MapResult mean_ap(const EvalTable& table) {
  table.validate();
  MapResult r;
  r.per_class = Vector::Constant(table.num_classes(), std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  Index counted = 0;
  for (Index c = 0; c < table.num_classes(); ++c) {
    if (!table.class_mask[static_cast<std::size_t>(c)]) continue;
    const auto ap = average_precision(table.scores.col(c), table.truth.col(c));
    if (!ap) {
      r.excluded.push_back(table.class_ids[static_cast<std::size_t>(c)]);
      continue;
    }
    r.per_class(c) = *ap;
    total += *ap;
    ++counted;
  }
  r.map = counted > 0 ? total / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

Prf topk_prf(const EvalTable& table, Index k) {
  table.validate();
  if (k < 1) throw RangeError("topk_prf: K must be >= 1");
  std::vector<Index> included;
  for (Index c = 0; c < table.num_classes(); ++c) {
    if (table.class_mask[static_cast<std::size_t>(c)]) included.push_back(c);
  }
  Prf out;
  out.k = k;
  Index kk = k;
  if (kk > static_cast<Index>(included.size())) {
    kk = static_cast<Index>(included.size());
    out.clamped = true;
  }
  Index tp = 0;
  Index predicted = 0;
  Index relevant = 0;
  for (Index i = 0; i < table.num_images(); ++i) {
    std::vector<Index> order = included;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return table.scores(i, a) > table.scores(i, b);
    });
    for (Index r = 0; r < kk; ++r) {
      ++predicted;
      if (table.truth(i, order[static_cast<std::size_t>(r)])) ++tp;
    }
    for (Index c : included) relevant += table.truth(i, c);
  }
  out.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  out.recall = relevant > 0 ? static_cast<double>(tp) / static_cast<double>(relevant) : 0.0;
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

EvalMode parse_eval_mode(const std::string& s) {
  std::string lower;
  for (char ch : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (lower == "zsl") return EvalMode::kZsl;
  if (lower == "gzsl") return EvalMode::kGzsl;
  throw ConfigError("unknown evaluation mode '" + s + "' (expected zsl or gzsl)");
}

std::string to_string(EvalMode mode) { return mode == EvalMode::kZsl ? "zsl" : "gzsl"; }

EvalTable split_eval(const EvalTable& table, EvalMode mode, const std::vector<std::uint8_t>& seen_mask) {
  table.validate();
  if (mode == EvalMode::kGzsl) return table;
  std::vector<Index> keep;
  for (Index c = 0; c < table.num_classes(); ++c) {
    const Index id = table.class_ids[static_cast<std::size_t>(c)];
    if (id < 0 || id >= static_cast<Index>(seen_mask.size())) {
      throw DimensionError("split_eval: seen mask does not cover class " + std::to_string(id));
    }
    if (!seen_mask[static_cast<std::size_t>(id)]) keep.push_back(c);
  }
  if (keep.empty()) {
    throw ConfigError("split_eval: ZSL requested but the vocabulary has no unseen classes");
  }
  EvalTable out;
  out.scores.resize(table.num_images(), static_cast<Index>(keep.size()));
  out.truth.resize(table.num_images(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto col = static_cast<Index>(j);
    out.scores.col(col) = table.scores.col(keep[j]);
    out.truth.col(col) = table.truth.col(keep[j]);
    out.class_mask.push_back(table.class_mask[static_cast<std::size_t>(keep[j])]);
    out.class_ids.push_back(table.class_ids[static_cast<std::size_t>(keep[j])]);
  }
  return out;
}

Tensor ranking_loss(const Tensor& pred, const Labels& labels, double margin) {
  if (pred.cols() != 1 || pred.rows() != static_cast<Index>(labels.size())) {
    throw DimensionError("ranking_loss: prediction must be C×1 with C labels");
  }
  std::vector<Index> pos_side;
  std::vector<Index> neg_side;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (!labels[p]) continue;
    for (std::size_t n = 0; n < labels.size(); ++n) {
      if (labels[n]) continue;
      pos_side.push_back(static_cast<Index>(p));
      neg_side.push_back(static_cast<Index>(n));
    }
  }
  if (pos_side.empty()) return Tensor::scalar(0.0);
  const Tensor diff = sub(gather_rows(pred, neg_side), gather_rows(pred, pos_side));
  return mean(relu(add_scalar(diff, margin)));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["K"] = k;
  j["P"] = precision;
  j["R"] = recall;
  j["F1"] = f1;
  j["mAP"] = map;
  j["excluded_classes"] = excluded_classes;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.mode = j.at("mode").get<std::string>();
    r.k = j.at("K").get<std::vector<Index>>();
    r.precision = j.at("P").get<std::vector<double>>();
    r.recall = j.at("R").get<std::vector<double>>();
    r.f1 = j.at("F1").get<std::vector<double>>();
    r.map = j.at("mAP").get<double>();
    r.excluded_classes = j.at("excluded_classes").get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("evaluation report: ") + e.what());
  }
  return r;
}

EvalReport make_report(const EvalTable& table, EvalMode mode, const std::vector<Index>& ks) {
  EvalReport r;
  r.mode = to_string(mode);
  r.k = ks;
  for (Index k : ks) {
    const Prf prf = topk_prf(table, k);
    r.precision.push_back(prf.precision);
    r.recall.push_back(prf.recall);
    r.f1.push_back(prf.f1);
  }
  const MapResult m = mean_ap(table);
  r.map = m.map;
  r.excluded_classes = m.excluded;
  return r;
}

}  // namespace dart

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dart/tensor.hpp"
#include "dart/wps.hpp"

namespace dart {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Scores and ground truth over images×classes. Classes with class_mask 0
/// are left out of every aggregate.
struct EvalTable {
  Matrix scores;
  BinaryMatrix truth;
  std::vector<std::uint8_t> class_mask;
  /// Original vocabulary id of each column.
  std::vector<Index> class_ids;

  static EvalTable make(Matrix scores, BinaryMatrix truth);
  [[nodiscard]] Index num_images() const { return scores.rows(); }
  [[nodiscard]] Index num_classes() const { return scores.cols(); }
  void validate() const;
};

/// AP of one class over images ranked by descending score (ties to the lower
/// image index). nullopt when the column has no positives.
std::optional<double> average_precision(const Vector& scores, const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& truth);

struct MapResult {
  double map = 0.0;
  /// Per column; NaN for excluded columns.
  Vector per_class;
  /// Vocabulary ids of included columns without any positive.
  std::vector<Index> excluded;
};

MapResult mean_ap(const EvalTable& table);

struct Prf {
  Index k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// K exceeded the number of included classes and was clamped.
  bool clamped = false;
};

/// Top-K label assignment per image; P = ΣTP/ΣPred, R = ΣTP/ΣN_c.
Prf topk_prf(const EvalTable& table, Index k);

enum class EvalMode { kZsl, kGzsl };

EvalMode parse_eval_mode(const std::string& s);
std::string to_string(EvalMode mode);

/// ZSL keeps unseen columns only; GZSL keeps the table unchanged.
EvalTable split_eval(const EvalTable& table, EvalMode mode, const std::vector<std::uint8_t>& seen_mask);

/// Mean over (positive, negative) pairs of max(0, margin + ŷ_n − ŷ_p).
/// `pred` is C×1. Zero when either side is empty.
Tensor ranking_loss(const Tensor& pred, const Labels& labels, double margin = 1.0);

struct EvalReport {
  std::string mode;
  std::vector<Index> k;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double map = 0.0;
  std::vector<Index> excluded_classes;

  [[nodiscard]] nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport make_report(const EvalTable& table, EvalMode mode, const std::vector<Index>& ks);

}  // namespace dart

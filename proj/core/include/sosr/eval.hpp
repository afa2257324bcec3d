#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sosr/embedding.hpp"

namespace sosr {

/// Unit-norm descriptors (rows) with class labels and optional split tags
/// ("reference" / "query" for the matching task).
struct LabeledDescriptorSet {
  Matrix descriptors;
  std::vector<Label> labels;
  std::vector<std::string> split;  // empty, or one tag per row

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return descriptors.cols(); }

  /// Throws on length mismatches, q < 2 or rows off the unit sphere.
  void validate() const;

  /// Rows whose split tag equals `tag`.
  LabeledDescriptorSet subset(const std::string& tag) const;
};

/// Threshold τ is the smallest positive distance with (#pos <= τ)/#pos >= recall;
/// returns (#neg <= τ)/#neg.
double fpr_at_recall(std::span<const double> pos_dists, std::span<const double> neg_dists, double recall = 0.95);

/// Non-interpolated average precision of a ranked relevance list:
/// mean over relevant items of precision at their rank.
double average_precision(const std::vector<bool>& ranked_relevance);

struct ScoredPair {
  double distance = 0.0;
  bool same_class = false;
};

struct VerificationResult {
  double ap = 0.0;
  double fpr_at_95 = 0.0;
};

/// Pairs are ranked by ascending distance (stable in input order).
VerificationResult verification_task(std::span<const ScoredPair> pairs);

/// Each query has exactly one same-label reference; AP of that query is
/// 1/rank, ties broken by reference index. Returns the mean over queries.
double matching_task(const LabeledDescriptorSet& reference, const LabeledDescriptorSet& query);

/// Every pool item sharing the query label is relevant; mean AP over queries.
double retrieval_task(const LabeledDescriptorSet& queries, const LabeledDescriptorSet& pool);

struct IndexPair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same_class = false;

  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// n_pos same-class then n_neg different-class index pairs (a < b), drawn
/// without replacement. Throws kInfeasible when a request cannot be met.
std::vector<IndexPair> build_verification_pairs(const LabeledDescriptorSet& set, std::size_t n_pos,
                                                std::size_t n_neg, std::uint64_t seed);

std::vector<ScoredPair> score_pairs(const LabeledDescriptorSet& set, std::span<const IndexPair> pairs);

struct EvalOptions {
  std::size_t n_pos = 5000;
  std::size_t n_neg = 5000;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double fpr_at_95 = 0.0;
  double verification_map = 0.0;
  double matching_map = 0.0;
  double retrieval_map = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t queries = 0;
};

/// Full report over one set. Matching uses the split tags when present,
/// otherwise the first instance of each class is the reference and the
/// second the query. Retrieval queries are the first instance of each class
/// against every other descriptor.
EvalReport evaluate_set(const LabeledDescriptorSet& set, const EvalOptions& options);

nlohmann::json to_json(const EvalReport& report);
std::string eval_csv_header();
std::string to_csv_row(const EvalReport& report);

}  // namespace sosr

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sosr/embedding.hpp"

namespace sosr {

enum class FosVariant { kHT, kQHT };

/// SAME_SIDE: KNN(x_i) over {x_j}, KNN(x_i⁺) over {x_j⁺}, restricted to c_i.
/// FULL_BATCH: the second-order distance runs over every j != i.
enum class SosNeighborMode { kSameSide, kFullBatch };

struct LossConfig {
  double margin = 1.0;
  std::size_t k = 8;
  FosVariant fos_variant = FosVariant::kQHT;
  SosNeighborMode sos_neighbor_mode = SosNeighborMode::kSameSide;
  double distance_epsilon = 1e-8;
  /// false evaluates the first-order loss alone (sos_loss == 0).
  bool enable_sosr = true;

  void validate() const;
};

/// Which of the four cross-pair distances attained the hardest negative,
/// in the order they are listed in the mining rule.
enum class NegativeKind : std::uint8_t {
  kAnchorAnchor,      // d(x_i,  x_j)
  kAnchorPositive,    // d(x_i,  x_j⁺)
  kPositiveAnchor,    // d(x_i⁺, x_j)
  kPositivePositive,  // d(x_i⁺, x_j⁺)
};

struct HardestNegative {
  double distance = 0.0;
  std::size_t j = 0;
  NegativeKind kind = NegativeKind::kAnchorAnchor;

  friend bool operator==(const HardestNegative&, const HardestNegative&) = default;
};

struct PairReport {
  double d_pos = 0.0;
  double d_neg = 0.0;
  HardestNegative negative;
  /// Labels z_j in c_i, ascending by batch index. Empty when SOSR is off.
  std::vector<Label> selected_neighbors;
};

struct LossGradReport {
  double fos_loss = 0.0;
  double sos_loss = 0.0;
  double total_loss = 0.0;
  Matrix grad_anchors;
  Matrix grad_positives;
  std::vector<PairReport> per_pair;
};

/// The discrete choices of one evaluation: hardest negatives and, for
/// SAME_SIDE, the neighbour index sets. Frozen while differentiating.
struct LossSelection {
  std::vector<HardestNegative> negatives;
  std::vector<std::vector<std::size_t>> neighbors;  // batch indices, ascending
};

HardestNegative hardest_negative(const PairBatch& batch, std::size_t i);

double fos_loss(const PairBatch& batch, const LossConfig& cfg);

/// Returns the labels of c_i (ascending batch index). Ties in distance go to
/// the smaller index.
std::vector<Label> knn_select(const PairBatch& batch, std::size_t i, std::size_t k);

double sos_distance(const PairBatch& batch, std::size_t i, const LossConfig& cfg);

double sosr(const PairBatch& batch, const LossConfig& cfg);

/// Loss values, per-pair diagnostics and the analytic gradient of
/// fos + sosr with the selection held fixed.
LossGradReport total_loss(const PairBatch& batch, const LossConfig& cfg);

/// Mining and KNN selection on raw (not necessarily unit) rows.
LossSelection select(const Matrix& anchors, const Matrix& positives, const LossConfig& cfg);

/// Loss (and optionally gradient) under a fixed selection. Rows need not be
/// unit norm, which is what finite differencing needs.
LossGradReport evaluate_frozen(const Matrix& anchors, const Matrix& positives, const std::vector<Label>& labels,
                               const LossSelection& selection, const LossConfig& cfg, bool with_gradient);

struct FdCheckOptions {
  double h = 1e-5;
  /// Jittered re-draws attempted when the batch sits on a tie or kink.
  int max_resamples = 3;
  double jitter = 1e-3;
  std::uint64_t seed = 0;
};

struct FdCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  int resamples = 0;
};

/// Central differences of the frozen-selection loss against the analytic
/// gradient; returns max |analytic - numeric| / max(1e-12, |numeric|).
/// Throws kNondifferentiable when every attempt lands on a tie or kink.
FdCheckResult finite_difference_check(const PairBatch& batch, const LossConfig& cfg,
                                      const FdCheckOptions& options = {});

/// Describes why a batch is not a smooth point for step h, or nullopt.
std::optional<std::string> find_nonsmooth_point(const PairBatch& batch, const LossConfig& cfg, double h);

}  // namespace sosr

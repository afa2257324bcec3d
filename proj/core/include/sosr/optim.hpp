#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "sosr/embedding.hpp"
#include "sosr/eval.hpp"
#include "sosr/loss.hpp"

namespace sosr {

enum class OptimizerKind { kSGD, kAdam };

struct SgdConfig {
  double lr0 = 0.01;
  std::size_t decay_epoch = 50;
  double decay_factor = 10.0;
};

struct AdamConfig {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  SgdConfig sgd;
  AdamConfig adam;
  std::size_t epochs = 100;
  std::size_t pairs_per_batch = 512;
  /// loss.enable_sosr switches between the first-order loss alone and fos + sosr.
  LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
};

/// lr0 before decay_epoch, lr0 / decay_factor from decay_epoch on (one drop).
double sgd_learning_rate(const SgdConfig& cfg, std::size_t epoch);

struct OptimizerState {
  Matrix m;
  Matrix v;
};

/// One bias-corrected Adam update of a flat parameter block, no projection.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 const AdamConfig& cfg, std::uint64_t step);

/// Applies the configured optimizer to every row, then projects each row back
/// onto the unit sphere. `step` counts from 1. Throws kDivergence on a
/// non-finite gradient.
void optimizer_step(Matrix& params, const Matrix& grads, OptimizerState& state, const TrainConfig& cfg,
                    std::uint64_t step, std::size_t epoch);

/// Free descriptors, one row per training sample, grouped by class.
class EmbeddingTable {
 public:
  struct ClassRows {
    Label label;
    std::vector<std::size_t> rows;
  };

  /// Takes the set's descriptors as initial values. Every class needs >= 2 rows.
  static EmbeddingTable from_set(const LabeledDescriptorSet& set);

  /// Same label structure, rows drawn uniformly on S^{q-1}.
  static EmbeddingTable random_init(const std::vector<Label>& labels, std::size_t q, std::uint64_t seed);

  const Matrix& embeddings() const noexcept { return embeddings_; }
  Matrix& embeddings() noexcept { return embeddings_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  const std::vector<ClassRows>& classes() const noexcept { return classes_; }
  std::size_t dim() const noexcept { return embeddings_.cols(); }

  LabeledDescriptorSet to_set() const;

 private:
  EmbeddingTable(Matrix embeddings, std::vector<Label> labels);

  Matrix embeddings_;
  std::vector<Label> labels_;
  std::vector<ClassRows> classes_;
};

struct SampledBatch {
  PairBatch batch;
  std::vector<std::size_t> anchor_rows;
  std::vector<std::size_t> positive_rows;
};

/// Shuffles the classes with an epoch-specific stream and cuts them into
/// floor(C / N) batches of N distinct classes; the remainder sits out this
/// epoch. Each class contributes two distinct instances (anchor, positive).
std::vector<SampledBatch> sample_epoch_batches(const EmbeddingTable& table, std::size_t n, std::uint64_t seed,
                                               std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double fos_loss = 0.0;
  double sos_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> fpr95;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

/// Verification pairs over table rows, scored after every epoch.
struct ValidationPairs {
  std::vector<IndexPair> pairs;
};

struct TrainResult {
  EmbeddingTable table;
  TrainHistory history;
};

TrainResult train(EmbeddingTable table, const TrainConfig& cfg, const ValidationPairs* validation = nullptr);

/// FPR@95 of the given pairs under the table's current embeddings.
double table_fpr95(const EmbeddingTable& table, std::span<const IndexPair> pairs);

/// "epoch,fos,sos,total,fpr95"; fpr95 empty when no validation was run.
void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace sosr

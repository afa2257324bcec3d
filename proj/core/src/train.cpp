#include <algorithm>
#include <cstdio>
#include <map>
#include <string>

#include "sosr/error.hpp"
#include "sosr/optim.hpp"
#include "sosr/random.hpp"
#include "sosr/vmf.hpp"

namespace sosr {

EmbeddingTable::EmbeddingTable(Matrix embeddings, std::vector<Label> labels)
    : embeddings_(std::move(embeddings)), labels_(std::move(labels)) {
  if (embeddings_.rows() != labels_.size()) {
    throw Error(ErrorCode::kLabelCountMismatch, "embedding table: row and label counts differ");
  }
  std::map<Label, std::vector<std::size_t>> grouped;
  for (std::size_t i = 0; i < labels_.size(); ++i) grouped[labels_[i]].push_back(i);
  for (auto& [label, rows] : grouped) {
    if (rows.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "class " + std::to_string(label) + " has fewer than 2 instances; cannot form pairs");
    }
    classes_.push_back({label, std::move(rows)});
  }
}

EmbeddingTable EmbeddingTable::from_set(const LabeledDescriptorSet& set) {
  set.validate();
  return EmbeddingTable(set.descriptors, set.labels);
}

EmbeddingTable EmbeddingTable::random_init(const std::vector<Label>& labels, std::size_t q, std::uint64_t seed) {
  Matrix m(labels.size(), q);
  Rng rng = make_rng(seed, 0xE4B);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto x = sample_uniform_sphere(q, rng);
    std::copy(x.values().begin(), x.values().end(), m.row(i).begin());
  }
  return EmbeddingTable(std::move(m), labels);
}

LabeledDescriptorSet EmbeddingTable::to_set() const { return {embeddings_, labels_, {}}; }

std::vector<SampledBatch> sample_epoch_batches(const EmbeddingTable& table, std::size_t n, std::uint64_t seed,
                                               std::size_t epoch) {
  const auto& classes = table.classes();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "pairs per batch must be >= 2");
  if (classes.size() < n) {
    throw Error(ErrorCode::kInfeasible, "need at least " + std::to_string(n) + " classes with 2 instances, have " +
                                            std::to_string(classes.size()));
  }
  Rng rng = make_rng(seed, 0x5A3B1E00ULL + epoch);
  std::vector<std::size_t> order(classes.size());
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  const std::size_t q = table.dim();
  const auto& emb = table.embeddings();
  std::vector<SampledBatch> out;
  const std::size_t batches = classes.size() / n;
  out.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    Matrix anchors(n, q), positives(n, q);
    std::vector<Label> labels(n);
    std::vector<std::size_t> anchor_rows(n), positive_rows(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cls = classes[order[b * n + i]];
      const std::size_t count = cls.rows.size();
      const std::size_t a = uniform_index(rng, count);
      std::size_t p = uniform_index(rng, count - 1);
      if (p >= a) ++p;
      anchor_rows[i] = cls.rows[a];
      positive_rows[i] = cls.rows[p];
      labels[i] = cls.label;
      std::copy_n(emb.row(anchor_rows[i]).begin(), q, anchors.row(i).begin());
      std::copy_n(emb.row(positive_rows[i]).begin(), q, positives.row(i).begin());
    }
    out.push_back({PairBatch::from_rows(std::move(anchors), std::move(positives), std::move(labels)),
                   std::move(anchor_rows), std::move(positive_rows)});
  }
  return out;
}

double table_fpr95(const EmbeddingTable& table, std::span<const IndexPair> pairs) {
  std::vector<double> pos, neg;
  for (const auto& p : pairs) {
    const double d = l2_distance(table.embeddings().row(p.a), table.embeddings().row(p.b));
    (p.same_class ? pos : neg).push_back(d);
  }
  return fpr_at_recall(pos, neg, 0.95);
}

TrainResult train(EmbeddingTable table, const TrainConfig& cfg, const ValidationPairs* validation) {
  cfg.validate();
  TrainResult result{std::move(table), {}};
  if (cfg.epochs == 0) return result;
  auto& tab = result.table;
  if (tab.classes().size() < cfg.pairs_per_batch) {
    throw Error(ErrorCode::kInfeasible, "pairs per batch N=" + std::to_string(cfg.pairs_per_batch) + " exceeds the " +
                                            std::to_string(tab.classes().size()) + " available classes");
  }

  OptimizerState state;
  Matrix grads(tab.embeddings().rows(), tab.dim());
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = sample_epoch_batches(tab, cfg.pairs_per_batch, cfg.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      // Batches drawn at the start of the epoch hold stale copies; refresh.
      const auto& plan = batches[b];
      Matrix anchors(plan.anchor_rows.size(), tab.dim()), positives(plan.anchor_rows.size(), tab.dim());
      for (std::size_t i = 0; i < plan.anchor_rows.size(); ++i) {
        std::copy_n(tab.embeddings().row(plan.anchor_rows[i]).begin(), tab.dim(), anchors.row(i).begin());
        std::copy_n(tab.embeddings().row(plan.positive_rows[i]).begin(), tab.dim(), positives.row(i).begin());
      }
      const auto batch = PairBatch::from_rows(std::move(anchors), std::move(positives), plan.batch.labels());
      const auto rep = total_loss(batch, cfg.loss);
      rec.fos_loss += rep.fos_loss;
      rec.sos_loss += rep.sos_loss;
      rec.total_loss += rep.total_loss;

      for (std::size_t i = 0; i < plan.anchor_rows.size(); ++i) {
        auto ga = grads.row(plan.anchor_rows[i]);
        auto gp = grads.row(plan.positive_rows[i]);
        const auto ra = rep.grad_anchors.row(i);
        const auto rp = rep.grad_positives.row(i);
        for (std::size_t k = 0; k < tab.dim(); ++k) {
          ga[k] += ra[k];
          gp[k] += rp[k];
        }
      }
      try {
        optimizer_step(tab.embeddings(), grads, state, cfg, ++step, epoch);
      } catch (const Error& e) {
        throw Error(e.code(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step) + ")");
      }
      for (std::size_t i = 0; i < plan.anchor_rows.size(); ++i) {
        std::fill_n(grads.row(plan.anchor_rows[i]).begin(), tab.dim(), 0.0);
        std::fill_n(grads.row(plan.positive_rows[i]).begin(), tab.dim(), 0.0);
      }
    }
    const double nb = static_cast<double>(batches.size());
    rec.fos_loss /= nb;
    rec.sos_loss /= nb;
    rec.total_loss = rec.fos_loss + rec.sos_loss;
    if (validation != nullptr && !validation->pairs.empty()) rec.fpr95 = table_fpr95(tab, validation->pairs);
    result.history.push_back(rec);
  }
  return result;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,fos,sos,total,fpr95\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,", r.epoch, r.fos_loss, r.sos_loss, r.total_loss);
    out << buf;
    if (r.fpr95) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.fpr95);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace sosr

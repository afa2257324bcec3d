#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "cli.hpp"
#include "sosr/error.hpp"
#include "sosr/random.hpp"
#include "sosr/vmf.hpp"

namespace sosr::cli {

PairBatch random_pair_batch(std::size_t n, std::size_t q, std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_rng(seed, stream);
  std::normal_distribution<double> noise(0.0, 0.5 / std::sqrt(static_cast<double>(q)));
  Matrix a(n, q), p(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = sample_uniform_sphere(q, rng);
    for (std::size_t k = 0; k < q; ++k) {
      a(i, k) = x[k];
      p(i, k) = x[k] + noise(rng);
    }
  }
  project_rows_to_sphere(a);
  project_rows_to_sphere(p);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<Label>(i);
  return PairBatch::from_rows(std::move(a), std::move(p), std::move(labels));
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.batch_sizes.empty() || options.dims.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "gradcheck needs at least one batch size and one dimension");
  }
  for (const auto n : options.batch_sizes) {
    if (n < 2) throw Error(ErrorCode::kInvalidArgument, "gradcheck batch sizes must be >= 2");
  }
  for (const auto q : options.dims) {
    if (q < 2) throw Error(ErrorCode::kInvalidArgument, "gradcheck dimensions must be >= 2");
  }
  if (!(options.threshold > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gradcheck threshold must be > 0");

  GradcheckReport report;
  for (std::size_t t = 0; t < options.trials; ++t) {
    std::size_t idx = t;
    const std::size_t mode = idx % 3;
    idx /= 3;
    const bool qht = idx % 2 == 1;
    idx /= 2;
    const std::size_t q = options.dims[idx % options.dims.size()];
    idx /= options.dims.size();
    const std::size_t n = options.batch_sizes[idx % options.batch_sizes.size()];

    GradcheckTrial trial;
    trial.trial = t;
    trial.n = n;
    trial.q = q;
    trial.loss.fos_variant = qht ? FosVariant::kQHT : FosVariant::kHT;
    trial.loss.enable_sosr = mode != 0;
    trial.loss.sos_neighbor_mode = mode == 2 ? SosNeighborMode::kFullBatch : SosNeighborMode::kSameSide;
    trial.loss.k = std::max<std::size_t>(1, n / 4);

    FdCheckOptions fd;
    fd.h = options.h;
    fd.seed = derive_seed(options.seed, t);
    try {
      const auto res = finite_difference_check(random_pair_batch(n, q, options.seed, t), trial.loss, fd);
      trial.max_relative_error = res.max_relative_error;
      trial.resamples = res.resamples;
      report.max_relative_error = std::max(report.max_relative_error, res.max_relative_error);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNondifferentiable) throw;
      trial.note = e.what();
      ++report.skipped;
    }
    report.trials.push_back(std::move(trial));
  }
  report.pass = report.skipped < report.trials.size() && report.max_relative_error < options.threshold;
  return report;
}

nlohmann::json to_json(const GradcheckReport& report, const GradcheckOptions& options) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : report.trials) {
    nlohmann::json j = {{"trial", t.trial},
                        {"n", t.n},
                        {"q", t.q},
                        {"k", t.loss.k},
                        {"fos", t.loss.fos_variant == FosVariant::kQHT ? "qht" : "ht"},
                        {"sosr", !t.loss.enable_sosr                                            ? "off"
                                 : t.loss.sos_neighbor_mode == SosNeighborMode::kSameSide ? "same_side"
                                                                                          : "full_batch"},
                        {"resamples", t.resamples}};
    j["max_relative_error"] = t.max_relative_error ? nlohmann::json(*t.max_relative_error) : nlohmann::json(nullptr);
    if (!t.note.empty()) j["note"] = t.note;
    trials.push_back(std::move(j));
  }
  return {{"trials", trials},
          {"max_relative_error", report.max_relative_error},
          {"threshold", options.threshold},
          {"h", options.h},
          {"checked", report.trials.size() - report.skipped},
          {"skipped", report.skipped},
          {"pass", report.pass}};
}

CellResult run_cell(const LabeledDescriptorSet& data, TrainConfig cfg, const EvalOptions& eval, std::size_t n,
                    std::size_t k) {
  CellResult cell{n, k, std::nullopt, {}};
  cfg.pairs_per_batch = n;
  cfg.loss.k = k;
  try {
    auto result = train(EmbeddingTable::from_set(data), cfg);
    auto set = round_trip_f32(result.table.to_set());
    set.split = data.split;
    const auto pairs = build_verification_pairs(set, eval.n_pos, eval.n_neg, eval.seed);
    cell.fpr95 = verification_task(score_pairs(set, pairs)).fpr_at_95;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

EvalOptions clamp_pair_counts(const LabeledDescriptorSet& set, EvalOptions options, std::ostream* warn) {
  std::map<Label, std::uint64_t> counts;
  for (const Label l : set.labels) ++counts[l];
  std::uint64_t pos = 0;
  for (const auto& [label, c] : counts) pos += c * (c - 1) / 2;
  const std::uint64_t n = set.size();
  const std::uint64_t neg = n * (n - 1) / 2 - pos;
  if (options.n_pos > pos) {
    if (warn) *warn << "warning: only " << pos << " positive pairs available, using all of them\n";
    options.n_pos = pos;
  }
  if (options.n_neg > neg) {
    if (warn) *warn << "warning: only " << neg << " negative pairs available, using all of them\n";
    options.n_neg = neg;
  }
  return options;
}

}  // namespace sosr::cli

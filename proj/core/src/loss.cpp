#include "sosr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sosr/error.hpp"
#include "loss_detail.hpp"

namespace sosr {

void LossConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw Error(ErrorCode::kInvalidArgument, "margin must be >= 0");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  if (!(distance_epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "distance_epsilon must be > 0");
}

namespace detail {

BatchDistances compute_distances(const Matrix& anchors, const Matrix& positives) {
  return {pairwise_distances(anchors, anchors), pairwise_distances(anchors, positives),
          pairwise_distances(positives, positives)};
}

void check_batch_size(std::size_t n) {
  if (n < 2) throw Error(ErrorCode::kNoNegatives, "no negatives available: batch needs at least 2 pairs");
}

void check_k(std::size_t k, std::size_t n) {
  if (k < 1 || k + 1 > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "K=" + std::to_string(k) + " out of range [1, " + std::to_string(n - 1) + "]");
  }
}

HardestNegative mine(const BatchDistances& d, std::size_t i) {
  const std::size_t n = d.aa.rows();
  HardestNegative best{std::numeric_limits<double>::infinity(), 0, NegativeKind::kAnchorAnchor};
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    const double candidates[4] = {d.aa(i, j), d.ap(i, j), d.ap(j, i), d.pp(i, j)};
    for (int c = 0; c < 4; ++c) {
      if (candidates[c] < best.distance) best = {candidates[c], j, static_cast<NegativeKind>(c)};
    }
  }
  return best;
}

std::vector<std::size_t> nearest(const Matrix& same_side, std::size_t i, std::size_t k) {
  const std::size_t n = same_side.rows();
  std::vector<std::size_t> idx;
  idx.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) idx.push_back(j);
  }
  auto closer = [&](std::size_t a, std::size_t b) {
    const double da = same_side(i, a), db = same_side(i, b);
    return da < db || (da == db && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> neighbor_set(const BatchDistances& d, std::size_t i, std::size_t k) {
  auto from_anchor = nearest(d.aa, i, k);
  auto from_positive = nearest(d.pp, i, k);
  std::vector<std::size_t> out;
  out.reserve(from_anchor.size() + from_positive.size());
  std::sort(from_anchor.begin(), from_anchor.end());
  std::sort(from_positive.begin(), from_positive.end());
  std::set_union(from_anchor.begin(), from_anchor.end(), from_positive.begin(), from_positive.end(),
                 std::back_inserter(out));
  return out;
}

std::vector<std::size_t> all_others(std::size_t i, std::size_t n) {
  std::vector<std::size_t> out;
  out.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) out.push_back(j);
  }
  return out;
}

LossSelection select(const BatchDistances& d, const LossConfig& cfg) {
  const std::size_t n = d.aa.rows();
  check_batch_size(n);
  LossSelection sel;
  sel.negatives.reserve(n);
  for (std::size_t i = 0; i < n; ++i) sel.negatives.push_back(mine(d, i));
  if (cfg.enable_sosr) {
    if (cfg.sos_neighbor_mode == SosNeighborMode::kSameSide) check_k(cfg.k, n);
    sel.neighbors.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      sel.neighbors.push_back(cfg.sos_neighbor_mode == SosNeighborMode::kSameSide ? neighbor_set(d, i, cfg.k)
                                                                                  : all_others(i, n));
    }
  }
  return sel;
}

namespace {

// Distances come from the cache when one is supplied; the cache and
// l2_distance produce identical bits.
struct Evaluator {
  const Matrix& a;
  const Matrix& p;
  const BatchDistances* cache;

  double aa(std::size_t i, std::size_t j) const { return cache ? cache->aa(i, j) : l2_distance(a.row(i), a.row(j)); }
  double ap(std::size_t i, std::size_t j) const { return cache ? cache->ap(i, j) : l2_distance(a.row(i), p.row(j)); }
  double pp(std::size_t i, std::size_t j) const { return cache ? cache->pp(i, j) : l2_distance(p.row(i), p.row(j)); }
};

// grad_u += coef * (u - v) / d ; grad_v -= coef * (u - v) / d. Zero below eps.
void accumulate_distance_grad(std::span<const double> u, std::span<const double> v, std::span<double> gu,
                              std::span<double> gv, double d, double coef, double eps) {
  if (d < eps || coef == 0.0) return;
  const double s = coef / d;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double g = s * (u[k] - v[k]);
    gu[k] += g;
    gv[k] -= g;
  }
}

}  // namespace

LossGradReport evaluate(const Matrix& a, const Matrix& p, const std::vector<Label>& labels,
                        const LossSelection& sel, const LossConfig& cfg, bool with_gradient,
                        const BatchDistances* cache) {
  const std::size_t n = a.rows();
  check_batch_size(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = cfg.distance_epsilon;
  const Evaluator dist{a, p, cache};

  LossGradReport rep;
  rep.per_pair.resize(n);
  if (with_gradient) {
    rep.grad_anchors = Matrix(n, a.cols());
    rep.grad_positives = Matrix(n, a.cols());
  }

  double fos_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const HardestNegative& neg = sel.negatives[i];
    const std::size_t j = neg.j;
    double d_neg = 0.0;
    switch (neg.kind) {
      case NegativeKind::kAnchorAnchor: d_neg = dist.aa(i, j); break;
      case NegativeKind::kAnchorPositive: d_neg = dist.ap(i, j); break;
      case NegativeKind::kPositiveAnchor: d_neg = dist.ap(j, i); break;
      case NegativeKind::kPositivePositive: d_neg = dist.pp(i, j); break;
    }
    const double d_pos = dist.ap(i, i);
    PairReport& pr = rep.per_pair[i];
    pr.d_pos = d_pos;
    pr.d_neg = d_neg;
    pr.negative = {d_neg, j, neg.kind};

    const double r = cfg.margin + d_pos - d_neg;
    if (r <= 0.0) continue;
    double dloss_dr = 0.0;
    if (cfg.fos_variant == FosVariant::kQHT) {
      fos_sum += r * r;
      dloss_dr = 2.0 * r * inv_n;
    } else {
      fos_sum += r;
      dloss_dr = inv_n;
    }
    if (!with_gradient) continue;
    auto& ga = rep.grad_anchors;
    auto& gp = rep.grad_positives;
    accumulate_distance_grad(a.row(i), p.row(i), ga.row(i), gp.row(i), d_pos, dloss_dr, eps);
    switch (neg.kind) {
      case NegativeKind::kAnchorAnchor:
        accumulate_distance_grad(a.row(i), a.row(j), ga.row(i), ga.row(j), d_neg, -dloss_dr, eps);
        break;
      case NegativeKind::kAnchorPositive:
        accumulate_distance_grad(a.row(i), p.row(j), ga.row(i), gp.row(j), d_neg, -dloss_dr, eps);
        break;
      case NegativeKind::kPositiveAnchor:
        accumulate_distance_grad(p.row(i), a.row(j), gp.row(i), ga.row(j), d_neg, -dloss_dr, eps);
        break;
      case NegativeKind::kPositivePositive:
        accumulate_distance_grad(p.row(i), p.row(j), gp.row(i), gp.row(j), d_neg, -dloss_dr, eps);
        break;
    }
  }
  rep.fos_loss = fos_sum * inv_n;

  if (cfg.enable_sosr) {
    double sos_sum = 0.0;
    std::vector<double> diffs;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& neighbors = sel.neighbors[i];
      diffs.resize(neighbors.size());
      double s = 0.0;
      for (std::size_t m = 0; m < neighbors.size(); ++m) {
        const std::size_t j = neighbors[m];
        diffs[m] = dist.aa(i, j) - dist.pp(i, j);
        s += diffs[m] * diffs[m];
      }
      const double d2 = std::sqrt(s);
      sos_sum += d2;
      auto& pr = rep.per_pair[i];
      pr.selected_neighbors.reserve(neighbors.size());
      for (const std::size_t j : neighbors) pr.selected_neighbors.push_back(labels[j]);
      if (!with_gradient || d2 < eps) continue;
      for (std::size_t m = 0; m < neighbors.size(); ++m) {
        const std::size_t j = neighbors[m];
        const double w = diffs[m] / d2 * inv_n;
        accumulate_distance_grad(a.row(i), a.row(j), rep.grad_anchors.row(i), rep.grad_anchors.row(j),
                                 dist.aa(i, j), w, eps);
        accumulate_distance_grad(p.row(i), p.row(j), rep.grad_positives.row(i), rep.grad_positives.row(j),
                                 dist.pp(i, j), -w, eps);
      }
    }
    rep.sos_loss = sos_sum * inv_n;
  }
  rep.total_loss = rep.fos_loss + rep.sos_loss;
  return rep;
}

}  // namespace detail

HardestNegative hardest_negative(const PairBatch& batch, std::size_t i) {
  detail::check_batch_size(batch.size());
  if (i >= batch.size()) throw Error(ErrorCode::kInvalidArgument, "pair index out of range");
  return detail::mine(detail::compute_distances(batch.anchors(), batch.positives()), i);
}

double fos_loss(const PairBatch& batch, const LossConfig& cfg) {
  LossConfig fos_only = cfg;
  fos_only.enable_sosr = false;
  fos_only.validate();
  const auto d = detail::compute_distances(batch.anchors(), batch.positives());
  const auto sel = detail::select(d, fos_only);
  return detail::evaluate(batch.anchors(), batch.positives(), batch.labels(), sel, fos_only, false, &d).fos_loss;
}

std::vector<Label> knn_select(const PairBatch& batch, std::size_t i, std::size_t k) {
  detail::check_batch_size(batch.size());
  detail::check_k(k, batch.size());
  if (i >= batch.size()) throw Error(ErrorCode::kInvalidArgument, "pair index out of range");
  const auto d = detail::compute_distances(batch.anchors(), batch.positives());
  std::vector<Label> out;
  for (const std::size_t j : detail::neighbor_set(d, i, k)) out.push_back(batch.labels()[j]);
  return out;
}

double sos_distance(const PairBatch& batch, std::size_t i, const LossConfig& cfg) {
  cfg.validate();
  detail::check_batch_size(batch.size());
  if (i >= batch.size()) throw Error(ErrorCode::kInvalidArgument, "pair index out of range");
  const auto d = detail::compute_distances(batch.anchors(), batch.positives());
  const auto neighbors = cfg.sos_neighbor_mode == SosNeighborMode::kSameSide
                             ? (detail::check_k(cfg.k, batch.size()), detail::neighbor_set(d, i, cfg.k))
                             : detail::all_others(i, batch.size());
  double s = 0.0;
  for (const std::size_t j : neighbors) {
    const double diff = d.aa(i, j) - d.pp(i, j);
    s += diff * diff;
  }
  return std::sqrt(s);
}

double sosr(const PairBatch& batch, const LossConfig& cfg) {
  LossConfig with_sos = cfg;
  with_sos.enable_sosr = true;
  with_sos.validate();
  const auto d = detail::compute_distances(batch.anchors(), batch.positives());
  const auto sel = detail::select(d, with_sos);
  return detail::evaluate(batch.anchors(), batch.positives(), batch.labels(), sel, with_sos, false, &d).sos_loss;
}

LossSelection select(const Matrix& anchors, const Matrix& positives, const LossConfig& cfg) {
  cfg.validate();
  return detail::select(detail::compute_distances(anchors, positives), cfg);
}

LossGradReport evaluate_frozen(const Matrix& anchors, const Matrix& positives, const std::vector<Label>& labels,
                               const LossSelection& selection, const LossConfig& cfg, bool with_gradient) {
  return detail::evaluate(anchors, positives, labels, selection, cfg, with_gradient, nullptr);
}

LossGradReport total_loss(const PairBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const auto d = detail::compute_distances(batch.anchors(), batch.positives());
  const auto sel = detail::select(d, cfg);
  return detail::evaluate(batch.anchors(), batch.positives(), batch.labels(), sel, cfg, true, &d);
}

}  // namespace sosr

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "loss_detail.hpp"
#include "sosr/error.hpp"
#include "sosr/loss.hpp"
#include "sosr/random.hpp"

namespace sosr {

namespace {

// Discrete choices count as tied when the competing distances agree to
// within rounding; the frozen-selection loss is smooth across them, but the
// true objective is not differentiable there.
constexpr double kTieTolerance = 1e-12;

bool tied(double a, double b) { return std::abs(a - b) <= kTieTolerance * std::max(1.0, std::abs(a)); }

std::optional<std::string> nonsmooth_reason(const Matrix& a, const Matrix& p, const LossConfig& cfg, double h) {
  const auto d = detail::compute_distances(a, p);
  const auto sel = detail::select(d, cfg);
  const std::size_t n = a.rows();
  // A coordinate step of h moves any distance by at most h.
  const double kink_band = 4.0 * h;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& best = sel.negatives[i];
    const double d_pos = d.ap(i, i);
    const double r = cfg.margin + d_pos - best.distance;
    if (std::abs(r) <= kink_band) return "hinge kink for pair " + std::to_string(i);
    if (r < 0.0) continue;
    if (d_pos < cfg.distance_epsilon + kink_band || best.distance < cfg.distance_epsilon + kink_band) {
      return "zero distance in active hinge for pair " + std::to_string(i);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double candidates[4] = {d.aa(i, j), d.ap(i, j), d.ap(j, i), d.pp(i, j)};
      for (int c = 0; c < 4; ++c) {
        if (j == best.j && static_cast<NegativeKind>(c) == best.kind) continue;
        if (tied(candidates[c], best.distance)) {
          return "hardest-negative tie for pair " + std::to_string(i);
        }
      }
    }
  }

  if (!cfg.enable_sosr) return std::nullopt;

  if (cfg.sos_neighbor_mode == SosNeighborMode::kSameSide && cfg.k + 1 < n) {
    for (const Matrix* side : {&d.aa, &d.pp}) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) row.push_back((*side)(i, j));
        }
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(cfg.k), row.end());
        const double next = row[cfg.k];
        const double kth = *std::max_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(cfg.k));
        if (tied(kth, next)) return "KNN boundary tie for pair " + std::to_string(i);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const std::size_t j : sel.neighbors[i]) {
      if (d.aa(i, j) < cfg.distance_epsilon + kink_band || d.pp(i, j) < cfg.distance_epsilon + kink_band) {
        return "zero distance inside second-order term for pair " + std::to_string(i);
      }
      const double diff = d.aa(i, j) - d.pp(i, j);
      s += diff * diff;
    }
    const double band = kink_band * std::sqrt(static_cast<double>(sel.neighbors[i].size()) + 1.0);
    if (std::sqrt(s) < cfg.distance_epsilon + band) {
      return "second-order distance near zero for pair " + std::to_string(i);
    }
  }
  return std::nullopt;
}

FdCheckResult check_at(const Matrix& anchors, const Matrix& positives, const std::vector<Label>& labels,
                       const LossConfig& cfg, double h) {
  const auto sel = select(anchors, positives, cfg);
  const auto analytic = evaluate_frozen(anchors, positives, labels, sel, cfg, true);

  FdCheckResult res;
  Matrix a = anchors;
  Matrix p = positives;
  auto probe = [&](Matrix& m, const Matrix& grad) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t k = 0; k < m.cols(); ++k) {
        const double orig = m(i, k);
        m(i, k) = orig + h;
        const double up = evaluate_frozen(a, p, labels, sel, cfg, false).total_loss;
        m(i, k) = orig - h;
        const double down = evaluate_frozen(a, p, labels, sel, cfg, false).total_loss;
        m(i, k) = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double abs_err = std::abs(grad(i, k) - numeric);
        res.max_absolute_error = std::max(res.max_absolute_error, abs_err);
        res.max_relative_error = std::max(res.max_relative_error, abs_err / std::max(1e-12, std::abs(numeric)));
      }
    }
  };
  probe(a, analytic.grad_anchors);
  probe(p, analytic.grad_positives);
  return res;
}

}  // namespace

std::optional<std::string> find_nonsmooth_point(const PairBatch& batch, const LossConfig& cfg, double h) {
  cfg.validate();
  return nonsmooth_reason(batch.anchors(), batch.positives(), cfg, h);
}

FdCheckResult finite_difference_check(const PairBatch& batch, const LossConfig& cfg, const FdCheckOptions& options) {
  cfg.validate();
  if (!(options.h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  Matrix a = batch.anchors();
  Matrix p = batch.positives();
  Rng rng = make_rng(options.seed, 0xFDC);
  std::normal_distribution<double> noise(0.0, options.jitter);
  std::string reason;
  for (int attempt = 0; attempt <= options.max_resamples; ++attempt) {
    if (attempt > 0) {
      for (Matrix* m : {&a, &p}) {
        for (double& x : m->data()) x += noise(rng);
        project_rows_to_sphere(*m);
      }
    }
    if (auto why = nonsmooth_reason(a, p, cfg, options.h)) {
      reason = *why;
      continue;
    }
    FdCheckResult res = check_at(a, p, batch.labels(), cfg, options.h);
    res.resamples = attempt;
    return res;
  }
  throw Error(ErrorCode::kNondifferentiable, "nondifferentiable point: " + reason);
}

}  // namespace sosr

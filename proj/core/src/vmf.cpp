#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

#include "sosr/error.hpp"
#include "sosr/parallel.hpp"
#include "sosr/vmf.hpp"

namespace sosr {

double vmf_log_density(const UnitDescriptor& x, const VmfParams& p) {
  if (x.dim() != p.dim()) throw Error(ErrorCode::kDimensionMismatch, "vmf_log_density: dimension mismatch");
  double dot = 0.0;
  for (std::size_t k = 0; k < x.dim(); ++k) dot += p.mu[k] * x[k];
  return vmf_log_normalizer(static_cast<int>(x.dim()), p.kappa) + p.kappa * dot;
}

double mean_resultant_length(const Matrix& rows) {
  if (rows.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "mean_resultant_length of an empty sample");
  std::vector<double> sum(rows.cols(), 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto r = rows.row(i);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += r[k];
  }
  return std::clamp(norm(sum) / static_cast<double>(rows.rows()), 0.0, 1.0);
}

double mean_resultant_length(std::span<const UnitDescriptor> samples) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "mean_resultant_length of an empty sample");
  const std::size_t q = samples.front().dim();
  std::vector<double> sum(q, 0.0);
  for (const auto& s : samples) {
    if (s.dim() != q) throw Error(ErrorCode::kDimensionMismatch, "mean_resultant_length: dimension mismatch");
    for (std::size_t k = 0; k < q; ++k) sum[k] += s[k];
  }
  return std::clamp(norm(sum) / static_cast<double>(samples.size()), 0.0, 1.0);
}

double estimate_kappa(double r_bar, int q) {
  if (q < 2) throw Error(ErrorCode::kInvalidArgument, "dimension q must be >= 2");
  if (!(r_bar >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "mean resultant length must be >= 0");
  if (r_bar >= 1.0) {
    throw Error(ErrorCode::kDegenerateConcentration, "degenerate concentration: R = 1 means kappa = infinity");
  }
  if (r_bar == 0.0) return 0.0;

  double kappa = r_bar * (q - r_bar * r_bar) / (1.0 - r_bar * r_bar);
  // Bracket the root: A is strictly increasing from A(0) = 0 towards 1.
  double lo = 0.0, hi = kappa;
  while (bessel_ratio_A(q, hi) < r_bar) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200; ++it) {
    const double a = bessel_ratio_A(q, kappa);
    const double f = a - r_bar;
    if (f == 0.0) break;
    (f < 0.0 ? lo : hi) = kappa;
    const double slope = 1.0 - a * a - (q - 1.0) / kappa * a;
    double next = kappa - f / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - kappa);
    kappa = next;
    if (step <= 4.0 * std::numeric_limits<double>::epsilon() * kappa) break;
  }
  return kappa;
}

UnitDescriptor sample_uniform_sphere(std::size_t q, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> g(q);
  double n = 0.0;
  do {
    for (double& x : g) x = normal(rng);
    n = norm(g);
  } while (n == 0.0);
  return project_to_sphere(g);
}

std::vector<UnitDescriptor> sample_vmf(const VmfParams& p, std::size_t n, Rng& rng) {
  if (!(p.kappa >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "kappa must be >= 0");
  const std::size_t q = p.dim();
  std::vector<UnitDescriptor> out;
  out.reserve(n);
  if (p.kappa == 0.0) {
    for (std::size_t s = 0; s < n; ++s) out.push_back(sample_uniform_sphere(q, rng));
    return out;
  }

  const double m1 = static_cast<double>(q) - 1.0;
  const double kappa = p.kappa;
  const double b = m1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(4.0 * b / ((1.0 + b) * (1.0 + b)));
  std::gamma_distribution<double> gamma(0.5 * m1, 1.0);
  std::normal_distribution<double> normal;

  std::vector<double> v(q), x(q);
  for (std::size_t s = 0; s < n; ++s) {
    double w = 0.0, one_minus_w = 0.0;
    for (;;) {
      const double g1 = gamma(rng), g2 = gamma(rng);
      const double z = g1 / (g1 + g2);
      const double denom = 1.0 - (1.0 - b) * z;
      w = (1.0 - (1.0 + b) * z) / denom;
      one_minus_w = 2.0 * b * z / denom;
      const double one_minus_x0w = 2.0 * b / (1.0 + b) + x0 * one_minus_w;
      const double u = uniform01(rng);
      if (kappa * w + m1 * std::log(one_minus_x0w) - c >= std::log(u)) break;
    }
    // Uniform direction in the tangent space at mu.
    double vn = 0.0;
    do {
      double dot = 0.0;
      for (std::size_t k = 0; k < q; ++k) {
        v[k] = normal(rng);
        dot += v[k] * p.mu[k];
      }
      for (std::size_t k = 0; k < q; ++k) v[k] -= dot * p.mu[k];
      vn = norm(v);
    } while (vn == 0.0);
    const double sine = std::sqrt(std::max(0.0, one_minus_w * (2.0 - one_minus_w)));
    for (std::size_t k = 0; k < q; ++k) x[k] = w * p.mu[k] + sine * v[k] / vn;
    out.push_back(project_to_sphere(x));
  }
  return out;
}

VmfStats hypersphere_stats(const Matrix& descriptors, std::span<const Label> labels,
                           const HypersphereOptions& options) {
  if (descriptors.rows() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "hypersphere_stats: descriptor and label counts differ");
  }
  const std::size_t q = descriptors.cols();
  std::map<Label, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(i);
  if (classes.size() < 2) throw Error(ErrorCode::kInvalidArgument, "hypersphere_stats needs at least 2 classes");

  // Canonical within-class order: lexicographic on the descriptor values.
  std::vector<std::vector<std::size_t>> members;
  members.reserve(classes.size());
  for (auto& [label, idx] : classes) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto ra = descriptors.row(a), rb = descriptors.row(b);
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    members.push_back(idx);
  }

  VmfStats stats;
  stats.class_count = classes.size();
  stats.inter_mode = options.inter_mode;
  stats.seed = options.seed;
  stats.random_tests = options.inter_mode == InterMode::kRandomTests ? options.random_tests : 0;

  std::vector<std::vector<double>> class_means;
  double intra_sum = 0.0;
  std::size_t intra_count = 0;
  std::size_t c = 0;
  for (const auto& [label, unused] : classes) {
    const auto& idx = members[c++];
    std::vector<double> sum(q, 0.0);
    for (const std::size_t i : idx) {
      const auto r = descriptors.row(i);
      for (std::size_t k = 0; k < q; ++k) sum[k] += r[k];
    }
    const double r_bar = std::clamp(norm(sum) / static_cast<double>(idx.size()), 0.0, 1.0);
    ClassStats cs{label, r_bar, 0.0, idx.size()};
    if (idx.size() < 2) {
      ++stats.excluded_classes;
      cs.kappa_hat = std::numeric_limits<double>::quiet_NaN();
    } else {
      cs.kappa_hat = r_bar < 1.0 ? estimate_kappa(r_bar, static_cast<int>(q)) : std::numeric_limits<double>::infinity();
      intra_sum += r_bar;
      ++intra_count;
    }
    stats.per_class.push_back(cs);
    const double sn = norm(sum);
    if (sn > 0.0) {
      for (double& x : sum) x /= sn;
    }
    class_means.push_back(std::move(sum));
  }
  if (intra_count == 0) throw Error(ErrorCode::kInvalidArgument, "no class has at least 2 samples");
  stats.r_intra = intra_sum / static_cast<double>(intra_count);

  const double m = static_cast<double>(members.size());
  if (options.inter_mode == InterMode::kDirectMeans) {
    std::vector<double> sum(q, 0.0);
    for (const auto& mu : class_means) {
      for (std::size_t k = 0; k < q; ++k) sum[k] += mu[k];
    }
    stats.r_inter = std::clamp(norm(sum) / m, 0.0, 1.0);
  } else {
    if (options.random_tests == 0) throw Error(ErrorCode::kInvalidArgument, "random_tests must be >= 1");
    std::vector<double> per_test(options.random_tests);
    parallel_for(
        options.random_tests,
        [&](std::size_t t) {
          Rng rng = make_rng(options.seed, t);
          std::vector<double> sum(q, 0.0);
          for (const auto& idx : members) {
            const auto r = descriptors.row(idx[uniform_index(rng, idx.size())]);
            for (std::size_t k = 0; k < q; ++k) sum[k] += r[k];
          }
          per_test[t] = std::clamp(norm(sum) / m, 0.0, 1.0);
        },
        64);
    double total = 0.0;
    for (const double r : per_test) total += r;
    stats.r_inter = total / static_cast<double>(per_test.size());
  }
  stats.rho = stats.r_inter / stats.r_intra;
  return stats;
}

nlohmann::json to_json(const VmfStats& stats) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : stats.per_class) {
    nlohmann::json kappa = nullptr;
    if (std::isfinite(c.kappa_hat)) kappa = c.kappa_hat;
    per_class.push_back({{"label", c.label}, {"r_bar", c.r_bar}, {"kappa_hat", kappa}, {"count", c.count}});
  }
  return {
      {"r_intra", stats.r_intra},
      {"r_inter", stats.r_inter},
      {"rho", stats.rho},
      {"per_class", per_class},
      {"protocol",
       {{"class_count", stats.class_count},
        {"random_tests", stats.random_tests},
        {"inter_mode", stats.inter_mode == InterMode::kRandomTests ? "random_tests" : "direct_means"},
        {"excluded_classes", stats.excluded_classes},
        {"seed", stats.seed}}},
  };
}

}  // namespace sosr

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sosr/embedding.hpp"
#include "sosr/random.hpp"

namespace sosr {

/// ln I_order(x) for order >= 0, x >= 0. Power series while
/// sqrt(order² + x²) is small, otherwise the uniform (Debye) asymptotic
/// expansion. Returns -inf for I_order(0) with order > 0.
double log_bessel_i(double order, double x);

/// A_q(κ) = I_{q/2}(κ) / I_{q/2-1}(κ), by continued fraction.
double bessel_ratio_A(int q, double kappa);

/// dA/dκ = 1 - A² - (q-1)/κ · A.
double bessel_ratio_A_derivative(int q, double kappa);

/// ln c_q(κ); at κ = 0 the log of the uniform density on S^{q-1}.
double vmf_log_normalizer(int q, double kappa);

struct VmfParams {
  UnitDescriptor mu;
  double kappa = 0.0;

  std::size_t dim() const noexcept { return mu.dim(); }
};

double vmf_log_density(const UnitDescriptor& x, const VmfParams& p);

/// (1/N) ‖Σ x_i‖₂, clamped to [0, 1].
double mean_resultant_length(std::span<const UnitDescriptor> samples);
double mean_resultant_length(const Matrix& rows);

/// Solves A_q(κ̂) = R̄ by Newton from R̄(q - R̄²)/(1 - R̄²), with a bisection
/// fallback. Throws kDegenerateConcentration for R̄ >= 1.
double estimate_kappa(double r_bar, int q);

/// Wood's rejection sampler for the cosine to μ plus a uniform tangent
/// direction. κ = 0 gives uniform samples on the sphere.
std::vector<UnitDescriptor> sample_vmf(const VmfParams& p, std::size_t n, Rng& rng);

/// One uniform draw from S^{q-1}.
UnitDescriptor sample_uniform_sphere(std::size_t q, Rng& rng);

enum class InterMode {
  kRandomTests,  // average of R̄ over draws of one descriptor per class
  kDirectMeans,  // (1/M) ‖Σ μ̂_i‖ over normalised class means
};

struct ClassStats {
  Label label = 0;
  double r_bar = 0.0;
  /// +inf when R̄ rounds to 1 (collapsed class).
  double kappa_hat = 0.0;
  std::size_t count = 0;
};

struct VmfStats {
  double r_intra = 0.0;
  double r_inter = 0.0;
  double rho = 0.0;
  std::vector<ClassStats> per_class;
  std::size_t class_count = 0;
  std::size_t random_tests = 0;
  InterMode inter_mode = InterMode::kRandomTests;
  /// Classes with fewer than two samples, left out of R_intra.
  std::size_t excluded_classes = 0;
  std::uint64_t seed = 0;
};

struct HypersphereOptions {
  std::size_t random_tests = 10000;
  InterMode inter_mode = InterMode::kRandomTests;
  std::uint64_t seed = 0;
};

/// R_intra, R_inter and ρ over labelled descriptors (rows of `descriptors`).
/// Samples are ordered canonically within each class first, so the result
/// does not depend on input order.
VmfStats hypersphere_stats(const Matrix& descriptors, std::span<const Label> labels,
                           const HypersphereOptions& options = {});

nlohmann::json to_json(const VmfStats& stats);

}  // namespace sosr

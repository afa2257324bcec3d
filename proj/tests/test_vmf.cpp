#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "sosr/error.hpp"
#include "sosr/vmf.hpp"
#include "support.hpp"

using namespace sosr;
using sosr::testing::unit;

namespace {

double coth_minus_inv(double k) { return 1.0 / std::tanh(k) - 1.0 / k; }

// ln(κ / (4π sinh κ)) without overflow.
double log_c3(double k) {
  const double log_sinh = k + std::log1p(-std::exp(-2.0 * k)) - std::numbers::ln2;
  return std::log(k) - std::log(4.0 * std::numbers::pi) - log_sinh;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, i / (n - 1.0)));
  return out;
}

Matrix rows_from(const std::vector<UnitDescriptor>& v) {
  Matrix m(v.size(), v.front().dim());
  for (std::size_t i = 0; i < v.size(); ++i) std::copy(v[i].values().begin(), v[i].values().end(), m.row(i).begin());
  return m;
}

}  // namespace

TEST(LogBessel, ZeroArgument) {
  EXPECT_EQ(log_bessel_i(0.0, 0.0), 0.0);
  EXPECT_EQ(log_bessel_i(2.0, 0.0), -std::numeric_limits<double>::infinity());
}

TEST(LogBessel, HalfOrderClosedForm) {
  EXPECT_NEAR(log_bessel_i(0.5, 2.0), 0.7160024296894680, 1e-12);
  for (const double x : log_grid(1e-3, 1e4, 60)) {
    const double log_sinh = x + std::log1p(-std::exp(-2.0 * x)) - std::numbers::ln2;
    const double ref = 0.5 * std::log(2.0 / (std::numbers::pi * x)) + log_sinh;
    EXPECT_NEAR(log_bessel_i(0.5, x), ref, 1e-10 * std::max(1.0, std::abs(ref))) << "x=" << x;
  }
}

TEST(LogBessel, ThreeHalvesClosedForm) {
  for (const double x : log_grid(0.5, 1e4, 40)) {
    // I_{3/2}(x) = sqrt(2/(πx)) (cosh x - sinh x / x); factor e^x / 2 out.
    const double e = std::exp(-2.0 * x);
    const double bracket = (1.0 + e) - (1.0 - e) / x;
    const double ref = 0.5 * std::log(2.0 / (std::numbers::pi * x)) + x - std::numbers::ln2 + std::log(bracket);
    EXPECT_NEAR(log_bessel_i(1.5, x), ref, 1e-10 * std::max(1.0, std::abs(ref))) << "x=" << x;
  }
}

TEST(LogBessel, AgreesWithBoostWhereRepresentable) {
  for (const double order : {0.0, 0.5, 1.0, 2.5, 10.0, 31.0, 63.0, 100.0, 200.0, 256.0}) {
    for (const double x : log_grid(1e-2, 700.0, 45)) {
      const double v = boost::math::cyl_bessel_i(order, x);
      if (!(v > 1e-290) || !std::isfinite(v)) continue;
      const double ref = std::log(v);
      EXPECT_NEAR(log_bessel_i(order, x), ref, 1e-10 * std::max(1.0, std::abs(ref)))
          << "order=" << order << " x=" << x;
    }
  }
}

TEST(LogBessel, HighPrecisionReferencePoints) {
  struct Case {
    double order, x, ref;
  };
  // Values from 50-digit arithmetic.
  const Case cases[] = {
      {0, 1, 0.2359143585071786},       {0, 50, 47.12757550187180},     {0, 1e4, 9994.475903781432},
      {63, 200, 186.5659656102636},     {64, 200, 186.2528474301667},   {256, 1e4, 9991.199118899156},
      {256, 50, -340.8044813254569},    {127, 1000, 987.5695918151296}, {1, 1e-5, -12.20607264551767},
      {63, 1e-3, -679.8661713465265},
  };
  for (const auto& c : cases) {
    EXPECT_NEAR(log_bessel_i(c.order, c.x), c.ref, 1e-10 * std::max(1.0, std::abs(c.ref)))
        << "order=" << c.order << " x=" << c.x;
  }
}

TEST(LogBessel, ContinuousAcrossMethodSwitch) {
  for (const double order : {0.0, 10.0, 30.0, 49.0}) {
    const double x_switch = std::sqrt(50.0 * 50.0 - order * order);
    const double below = log_bessel_i(order, x_switch * (1 - 1e-12));
    const double above = log_bessel_i(order, x_switch * (1 + 1e-12));
    EXPECT_NEAR(below, above, 1e-10 * std::abs(above));
  }
}

TEST(LogBessel, NegativeInputsThrow) {
  EXPECT_THROW(log_bessel_i(-1.0, 1.0), Error);
  EXPECT_THROW(log_bessel_i(1.0, -1.0), Error);
}

TEST(BesselRatio, ZeroKappa) {
  for (const int q : {2, 3, 64, 128}) EXPECT_EQ(bessel_ratio_A(q, 0.0), 0.0);
}

TEST(BesselRatio, ThreeDimensionalExample) {
  EXPECT_NEAR(bessel_ratio_A(3, 2.0), 0.5373147207275481, 1e-14);
}

TEST(BesselRatio, ThreeDimensionalClosedFormGrid) {
  for (const double k : log_grid(0.01, 500.0, 400)) {
    EXPECT_NEAR(bessel_ratio_A(3, k), coth_minus_inv(k), 1e-10) << "kappa=" << k;
  }
}

TEST(BesselRatio, HighDimensionReferenceValues) {
  EXPECT_NEAR(bessel_ratio_A(128, 200.0), 0.7311634984896441, 1e-12);
  EXPECT_NEAR(bessel_ratio_A(128, 5.0), 0.0390039853907354, 1e-12);
  // 1 - A(κ) ≈ (q - 1) / (2κ) for large κ.
  EXPECT_NEAR(bessel_ratio_A(128, 1e4), 0.99366984553771064, 1e-13);
  EXPECT_NEAR(bessel_ratio_A(128, 1e6), 1.0, 1e-3);
}

TEST(BesselRatio, LargeKappaReferenceValues) {
  EXPECT_NEAR(bessel_ratio_A(128, 1e6), 0.99993650198437698, 1e-14);
  EXPECT_NEAR(bessel_ratio_A(128, 1e7), 0.99999365001984375, 1e-14);
  EXPECT_NEAR(bessel_ratio_A(128, 1e9), 0.99999993650000198, 1e-14);
  EXPECT_NEAR(bessel_ratio_A(256, 3e6), 0.99995750089604196, 1e-14);
  EXPECT_NEAR(bessel_ratio_A(64, 2e5), 0.99984251200943498, 1e-14);
  EXPECT_NEAR(bessel_ratio_A(3, 1e7), 0.9999999, 1e-15);
}

TEST(BesselRatio, AccurateAroundLargeKappaSwitch) {
  struct Case {
    int q;
    double kappa, ref;
  };
  // Values from 50-digit arithmetic, at half, one and two times the point
  // where the evaluation method changes.
  const Case cases[] = {
      {3, 500.0, 0.998},
      {3, 1000.0, 0.999},
      {3, 2000.0, 0.9995},
      {64, 16384.0, 0.99807918222208514574},
      {64, 32768.0, 0.99903914368669789617},
      {64, 65536.0, 0.99951945999225211398},
      {128, 65536.0, 0.99903152892478308898},
      {128, 131072.0, 0.99951564895396732877},
      {128, 262144.0, 0.99975779560019933243},
      {256, 262144.0, 0.9995137434511749617},
      {256, 524288.0, 0.99975684238739727633},
      {256, 1048576.0, 0.99987841385917150658},
  };
  for (const auto& c : cases) {
    EXPECT_NEAR(bessel_ratio_A(c.q, c.kappa), c.ref, 1e-13) << "q=" << c.q << " kappa=" << c.kappa;
    EXPECT_NEAR(bessel_ratio_A(c.q, c.kappa * (1 - 1e-12)), bessel_ratio_A(c.q, c.kappa * (1 + 1e-12)), 1e-13);
  }
}

TEST(BesselRatio, MatchesLogBesselQuotient) {
  for (const int q : {4, 32, 128, 256}) {
    for (const double k : log_grid(0.1, 5000.0, 30)) {
      const double ref = std::exp(log_bessel_i(q / 2.0, k) - log_bessel_i(q / 2.0 - 1.0, k));
      EXPECT_NEAR(bessel_ratio_A(q, k), ref, 1e-9 * ref) << "q=" << q << " kappa=" << k;
    }
  }
}

TEST(BesselRatio, StrictlyIncreasingBelowOne) {
  for (const int q : {3, 64, 128}) {
    double prev = bessel_ratio_A(q, 0.0);
    for (const double k : log_grid(1e-3, 1e5, 500)) {
      const double a = bessel_ratio_A(q, k);
      EXPECT_GT(a, prev) << "q=" << q << " kappa=" << k;
      EXPECT_GE(a, 0.0);
      EXPECT_LT(a, 1.0);
      prev = a;
    }
  }
}

TEST(BesselRatio, DerivativeMatchesDifferenceQuotient) {
  for (const int q : {3, 128}) {
    for (const double k : {0.5, 5.0, 50.0, 500.0}) {
      const double h = 1e-5 * k;
      const double fd = (bessel_ratio_A(q, k + h) - bessel_ratio_A(q, k - h)) / (2 * h);
      EXPECT_NEAR(bessel_ratio_A_derivative(q, k), fd, 1e-6 * std::abs(fd) + 1e-12);
    }
  }
}

TEST(VmfNormalizer, ThreeDimensionalClosedForm) {
  for (const double k : log_grid(0.01, 1e4, 200)) {
    const double ref = log_c3(k);
    EXPECT_NEAR(vmf_log_normalizer(3, k), ref, 1e-10 * std::max(1.0, std::abs(ref))) << "kappa=" << k;
  }
}

TEST(VmfNormalizer, ZeroKappaIsUniform) {
  EXPECT_NEAR(vmf_log_normalizer(3, 0.0), -std::log(4.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(vmf_log_normalizer(2, 0.0), -std::log(2.0 * std::numbers::pi), 1e-14);
  // The κ → 0 limit of the general formula.
  EXPECT_NEAR(vmf_log_normalizer(128, 1e-8), vmf_log_normalizer(128, 0.0), 1e-7);
}

TEST(VmfDensity, UniformOnTwoSphere) {
  const VmfParams p{unit({0, 0, 1}), 0.0};
  EXPECT_NEAR(vmf_log_density(unit({1, 2, 3}), p), -2.5310242469692908, 1e-14);
}

TEST(VmfDensity, ValueAtMean) {
  const VmfParams p{unit({0, 0, 1}), 2.0};
  EXPECT_NEAR(vmf_log_density(unit({0, 0, 1}), p), -1.1262444390235136, 1e-13);
}

TEST(VmfDensity, IntegratesToOneOnTwoSphere) {
  const VmfParams p{unit({0, 1, 0}), 5.0};
  Rng rng(77);
  const int n = 1'000'000;
  double sum = 0.0;
  for (int s = 0; s < n; ++s) sum += std::exp(vmf_log_density(sample_uniform_sphere(3, rng), p));
  EXPECT_NEAR(4.0 * std::numbers::pi * sum / n, 1.0, 0.01);
}

TEST(VmfDensity, DimensionMismatch) {
  const VmfParams p{unit({0, 1, 0}), 1.0};
  EXPECT_THROW(vmf_log_density(unit({1, 0}), p), Error);
}

TEST(MeanResultantLength, Examples) {
  const std::vector<UnitDescriptor> same(5, unit({1, 2, 3}));
  EXPECT_NEAR(mean_resultant_length(same), 1.0, 1e-15);
  const std::vector<UnitDescriptor> antipodal = {unit({1, 0}), unit({-1, 0})};
  EXPECT_EQ(mean_resultant_length(antipodal), 0.0);
  const std::vector<UnitDescriptor> axes = {unit({1, 0}), unit({0, 1})};
  EXPECT_NEAR(mean_resultant_length(axes), std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_THROW(mean_resultant_length(std::vector<UnitDescriptor>{}), Error);
}

TEST(MeanResultantLength, RotationInvariant) {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const auto samples = sample_vmf({sample_uniform_sphere(9, rng), 3.0}, 40, rng);
    const auto rows = rows_from(samples);
    const auto rot = sosr::testing::random_rotation(9, rng);
    EXPECT_NEAR(mean_resultant_length(rows), mean_resultant_length(sosr::testing::rotate_rows(rows, rot)), 1e-12);
  }
}

TEST(EstimateKappa, ZeroResultant) { EXPECT_EQ(estimate_kappa(0.0, 128), 0.0); }

TEST(EstimateKappa, RefinesInitialGuess) {
  EXPECT_NEAR(0.8 * (128 - 0.64) / 0.36, 283.02, 0.005);
  const double k = estimate_kappa(0.8, 128);
  EXPECT_NEAR(bessel_ratio_A(128, k), 0.8, 1e-9);
  EXPECT_NE(k, 0.8 * (128 - 0.64) / 0.36);
}

TEST(EstimateKappa, RoundTrip) {
  EXPECT_NEAR(estimate_kappa(bessel_ratio_A(128, 50.0), 128), 50.0, 1e-6);
  for (const int q : {3, 128}) {
    for (const double k : log_grid(0.1, 1000.0, 200)) {
      EXPECT_NEAR(estimate_kappa(bessel_ratio_A(q, k), q), k, 1e-6 * k) << "q=" << q << " kappa=" << k;
    }
  }
}

TEST(EstimateKappa, DegenerateConcentration) {
  try {
    estimate_kappa(1.0, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateConcentration);
  }
  EXPECT_THROW(estimate_kappa(-0.1, 3), Error);
}

TEST(EstimateKappa, NearlyCollapsedStillFinite) {
  const double k = estimate_kappa(1.0 - 1e-15, 128);
  EXPECT_TRUE(std::isfinite(k));
  EXPECT_GT(k, 1e15);
}

TEST(SampleVmf, UniformWhenKappaZero) {
  Rng rng(1);
  const auto s = sample_vmf({unit({0, 0, 1}), 0.0}, 100000, rng);
  EXPECT_LT(mean_resultant_length(s), 0.02);
}

TEST(SampleVmf, ConcentratedNearMean) {
  Rng rng(2);
  const auto mu = unit({1, -2, 0.5, 3});
  for (const auto& x : sample_vmf({mu, 1e6}, 2000, rng)) {
    double dot = 0.0;
    for (std::size_t k = 0; k < 4; ++k) dot += x[k] * mu[k];
    EXPECT_LT(std::acos(std::min(1.0, dot)), 0.01);
  }
}

TEST(SampleVmf, KappaRecovery) {
  std::vector<double> e1(128, 0.0);
  e1[0] = 1.0;
  for (const double kappa : {10.0, 50.0, 200.0}) {
    Rng rng(static_cast<std::uint64_t>(kappa));
    const auto s = sample_vmf({UnitDescriptor::from_unit(e1), kappa}, 20000, rng);
    EXPECT_NEAR(estimate_kappa(mean_resultant_length(s), 128), kappa, 0.05 * kappa);
  }
}

TEST(SampleVmf, MeanCosineMatchesBesselRatio) {
  // E[⟨μ, x⟩] = A_q(κ) for vMF samples.
  Rng rng(5);
  for (const int q : {2, 3, 16}) {
    const auto mu = sample_uniform_sphere(q, rng);
    const auto s = sample_vmf({mu, 4.0}, 100000, rng);
    double mean = 0.0;
    for (const auto& x : s) {
      for (int k = 0; k < q; ++k) mean += x[k] * mu[k];
    }
    mean /= static_cast<double>(s.size());
    EXPECT_NEAR(mean, bessel_ratio_A(q, 4.0), 0.01) << "q=" << q;
  }
}

TEST(SampleVmf, Deterministic) {
  Rng a(9), b(9);
  const VmfParams p{unit({1, 1, 1}), 7.0};
  EXPECT_EQ(sample_vmf(p, 50, a), sample_vmf(p, 50, b));
}

TEST(HypersphereStats, CollapsedClassesHaveUnitIntra) {
  Matrix rows(6, 3);
  std::vector<Label> labels = {0, 0, 1, 1, 2, 2};
  const std::vector<std::vector<double>> points = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (std::size_t i = 0; i < 6; ++i) {
    std::copy(points[i / 2].begin(), points[i / 2].end(), rows.row(i).begin());
  }
  const auto st = hypersphere_stats(rows, labels, {});
  EXPECT_EQ(st.r_intra, 1.0);
  for (const auto& c : st.per_class) EXPECT_TRUE(std::isinf(c.kappa_hat));
  EXPECT_EQ(st.random_tests, 10000u);
  EXPECT_EQ(st.class_count, 3u);
  // One point per class at the three axes: every test gives ‖(1,1,1)‖/3.
  EXPECT_NEAR(st.r_inter, std::sqrt(3.0) / 3.0, 1e-12);
  const auto j = to_json(st);
  EXPECT_TRUE(j["per_class"][0]["kappa_hat"].is_null());
  EXPECT_EQ(j["protocol"]["random_tests"], 10000);
}

TEST(HypersphereStats, AntipodalClassesDirectMeans) {
  Matrix rows(4, 2);
  rows(0, 0) = rows(1, 0) = 1.0;
  rows(2, 0) = rows(3, 0) = -1.0;
  HypersphereOptions opt;
  opt.inter_mode = InterMode::kDirectMeans;
  const auto st = hypersphere_stats(rows, std::vector<Label>{5, 5, 9, 9}, opt);
  EXPECT_EQ(st.r_inter, 0.0);
  EXPECT_EQ(st.rho, 0.0);
  EXPECT_EQ(st.r_intra, 1.0);
}

TEST(HypersphereStats, SyntheticMixtureIntra) {
  // 100 centres from vMF(e1, 5), 50 samples per class at κ = 200, q = 128.
  Rng rng(1234);
  std::vector<double> e1(128, 0.0);
  e1[0] = 1.0;
  const auto centres = sample_vmf({UnitDescriptor::from_unit(e1), 5.0}, 100, rng);
  Matrix rows(5000, 128);
  std::vector<Label> labels;
  for (std::size_t c = 0; c < 100; ++c) {
    const auto s = sample_vmf({centres[c], 200.0}, 50, rng);
    for (std::size_t m = 0; m < 50; ++m) {
      std::copy(s[m].values().begin(), s[m].values().end(), rows.row(c * 50 + m).begin());
      labels.push_back(static_cast<Label>(c));
    }
  }
  HypersphereOptions opt;
  opt.inter_mode = InterMode::kDirectMeans;
  const auto st = hypersphere_stats(rows, labels, opt);
  // Per-class R̄ is biased up by ≈ (q-1)(1-A²)/(2κ·n); still well inside 2%.
  EXPECT_NEAR(st.r_intra, bessel_ratio_A(128, 200.0), 0.02 * bessel_ratio_A(128, 200.0));
  // With M = 100 the resultant of the true centres is dominated by its
  // sqrt(1/M) noise floor, so compare against that instead of A(5).
  const double centre_r = mean_resultant_length(centres);
  EXPECT_NEAR(st.r_inter, centre_r, 0.05 * centre_r);
  EXPECT_NEAR(st.rho, st.r_inter / st.r_intra, 1e-15);
}

TEST(HypersphereStats, DirectMeansRecoverInterConcentration) {
  // Many collapsed classes: the centre resultant approaches A(κ_inter).
  Rng rng(99);
  std::vector<double> e1(128, 0.0);
  e1[0] = 1.0;
  const std::size_t m = 20000;
  const auto centres = sample_vmf({UnitDescriptor::from_unit(e1), 5.0}, m, rng);
  Matrix rows(2 * m, 128);
  std::vector<Label> labels;
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < 2; ++r) {
      std::copy(centres[c].values().begin(), centres[c].values().end(), rows.row(2 * c + r).begin());
      labels.push_back(static_cast<Label>(c));
    }
  }
  HypersphereOptions opt;
  opt.inter_mode = InterMode::kDirectMeans;
  const auto st = hypersphere_stats(rows, labels, opt);
  EXPECT_NEAR(st.r_inter, bessel_ratio_A(128, 5.0), 0.05 * bessel_ratio_A(128, 5.0));
}

TEST(HypersphereStats, PermutationInvariant) {
  Rng rng(17);
  const std::size_t n = 300;
  Matrix rows(n, 8);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = sample_uniform_sphere(8, rng);
    std::copy(x.values().begin(), x.values().end(), rows.row(i).begin());
    labels[i] = static_cast<Label>(i % 23);
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix shuffled(n, 8);
  std::vector<Label> shuffled_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(rows.row(perm[i]).begin(), rows.row(perm[i]).end(), shuffled.row(i).begin());
    shuffled_labels[i] = labels[perm[i]];
  }
  HypersphereOptions opt;
  opt.random_tests = 500;
  opt.seed = 3;
  const auto a = hypersphere_stats(rows, labels, opt);
  const auto b = hypersphere_stats(shuffled, shuffled_labels, opt);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(HypersphereStats, SingletonClassesExcludedAndCounted) {
  Matrix rows(5, 2);
  rows(0, 0) = rows(1, 0) = rows(2, 0) = 1.0;
  rows(3, 1) = rows(4, 1) = 1.0;
  const auto st = hypersphere_stats(rows, std::vector<Label>{0, 0, 1, 2, 2}, {});
  EXPECT_EQ(st.excluded_classes, 1u);
  EXPECT_EQ(st.r_intra, 1.0);
  EXPECT_TRUE(std::isnan(st.per_class[1].kappa_hat));
}

TEST(HypersphereStats, SeedDeterminesRandomTests) {
  Rng rng(4);
  Matrix rows(60, 5);
  std::vector<Label> labels;
  for (std::size_t i = 0; i < 60; ++i) {
    const auto x = sample_uniform_sphere(5, rng);
    std::copy(x.values().begin(), x.values().end(), rows.row(i).begin());
    labels.push_back(static_cast<Label>(i % 6));
  }
  HypersphereOptions a;
  a.seed = 1;
  HypersphereOptions b = a;
  EXPECT_EQ(hypersphere_stats(rows, labels, a).r_inter, hypersphere_stats(rows, labels, b).r_inter);
  b.seed = 2;
  EXPECT_NE(hypersphere_stats(rows, labels, a).r_inter, hypersphere_stats(rows, labels, b).r_inter);
}

TEST(HypersphereStats, NeedsTwoClasses) {
  Matrix rows(2, 2);
  rows(0, 0) = rows(1, 0) = 1.0;
  EXPECT_THROW(hypersphere_stats(rows, std::vector<Label>{1, 1}, {}), Error);
}

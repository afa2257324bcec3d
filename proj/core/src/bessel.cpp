#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sosr/error.hpp"
#include "sosr/vmf.hpp"

namespace sosr {

namespace {

// Switch-over radius sqrt(ν² + x²) between the power series and the uniform
// expansion. With terms through u_6 the expansion error at r = 50 is ~1e-12.
constexpr double kDebyeRadius = 50.0;

// u_k(p) / p^k as polynomials in p², lowest power first.
constexpr std::array<std::array<double, 7>, 7> kDebye = {{
    {1.0},
    {1.0 / 8, -5.0 / 24},
    {9.0 / 128, -77.0 / 192, 385.0 / 1152},
    {75.0 / 1024, -4563.0 / 5120, 17017.0 / 9216, -85085.0 / 82944},
    {3675.0 / 32768, -96833.0 / 40960, 144001.0 / 16384, -7436429.0 / 663552, 37182145.0 / 7962624},
    {59535.0 / 262144, -67608983.0 / 9175040, 250881631.0 / 5898240, -108313205.0 / 1179648,
     5391411025.0 / 63700992, -5391411025.0 / 191102976},
    {2401245.0 / 4194304, -388895895.0 / 14680064, 1441372804469.0 / 6606028800, -33010308331.0 / 47185920,
     4445922195.0 / 4194304, -1169936192425.0 / 1528823808, 5849680962125.0 / 27518828544},
}};

double log_bessel_series(double nu, double x) {
  const double log_t0 = nu * std::log(0.5 * x) - std::lgamma(nu + 1.0);
  const double q = 0.25 * x * x;
  double sum = 1.0, term = 1.0;
  for (int k = 0; k < 100000; ++k) {
    term *= q / ((k + 1.0) * (k + 1.0 + nu));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return log_t0 + std::log(sum);
}

double log_bessel_debye(double nu, double x) {
  const double r = std::hypot(nu, x);
  const double p2 = (nu / r) * (nu / r);
  const double t = 1.0 / r;
  double correction = 0.0, tk = 1.0;
  for (std::size_t k = 1; k < kDebye.size(); ++k) {
    tk *= t;
    double poly = 0.0;
    for (std::size_t c = k + 1; c-- > 0;) poly = poly * p2 + kDebye[k][c];
    correction += tk * poly;
  }
  const double order_term = nu > 0.0 ? nu * std::log(x / (nu + r)) : 0.0;
  return -0.5 * std::log(2.0 * std::numbers::pi * r) + r + order_term + std::log1p(correction);
}

// Hankel expansion e^x / sqrt(2πx) · Σ (-1)^k a_k(ν) / x^k without the
// prefactor; a_k(ν) = Π_{m=1..k} (4ν² - (2m-1)²) / (k! 8^k).
double hankel_sum(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 30; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum;
}

// The continued fraction needs O(sqrt κ) terms; past this point the Hankel
// series converges in a handful of terms instead.
bool use_hankel(double nu, double kappa) { return kappa > 1e3 && kappa > 32.0 * (nu + 1.0) * (nu + 1.0); }

}  // namespace

double log_bessel_i(double order, double x) {
  if (!(order >= 0.0) || !(x >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "log_bessel_i needs order >= 0 and x >= 0");
  }
  if (x == 0.0) return order == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (std::hypot(order, x) < kDebyeRadius) return log_bessel_series(order, x);
  return log_bessel_debye(order, x);
}

double bessel_ratio_A(int q, double kappa) {
  if (q < 2) throw Error(ErrorCode::kInvalidArgument, "dimension q must be >= 2");
  if (!(kappa >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "kappa must be >= 0");
  if (kappa == 0.0) return 0.0;
  if (std::isinf(kappa)) return 1.0;
  // I_{ν+1}/I_ν = 1 / (b_1 + 1 / (b_2 + ...)), b_k = 2(ν + k)/κ, modified Lentz.
  const double nu = 0.5 * q - 1.0;
  if (use_hankel(nu, kappa)) return hankel_sum(nu + 1.0, kappa) / hankel_sum(nu, kappa);
  constexpr double tiny = 1e-300;
  double f = tiny, c = f, d = 0.0;
  for (int k = 1; k < 10'000'000; ++k) {
    const double b = 2.0 * (nu + k) / kappa;
    d = b + d;
    if (d == 0.0) d = tiny;
    c = b + 1.0 / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return f;
}

double bessel_ratio_A_derivative(int q, double kappa) {
  if (kappa == 0.0) return 1.0 / q;
  const double a = bessel_ratio_A(q, kappa);
  return 1.0 - a * a - (q - 1.0) / kappa * a;
}

double vmf_log_normalizer(int q, double kappa) {
  if (q < 2) throw Error(ErrorCode::kInvalidArgument, "dimension q must be >= 2");
  if (!(kappa >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "kappa must be >= 0");
  const double half_q = 0.5 * q;
  if (kappa == 0.0) {
    // -log |S^{q-1}|, |S^{q-1}| = 2 π^{q/2} / Γ(q/2)
    return -(std::numbers::ln2 + half_q * std::log(std::numbers::pi) - std::lgamma(half_q));
  }
  return (half_q - 1.0) * std::log(kappa) - half_q * std::log(2.0 * std::numbers::pi) -
         log_bessel_i(half_q - 1.0, kappa);
}

}  // namespace sosr

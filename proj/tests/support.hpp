#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "sosr/embedding.hpp"
#include "sosr/random.hpp"
#include "sosr/vmf.hpp"

namespace sosr::testing {

inline UnitDescriptor unit(std::vector<double> v) { return project_to_sphere(v); }

/// Point on the unit circle at `degrees`.
inline UnitDescriptor on_circle(double degrees) {
  const double r = degrees * std::numbers::pi / 180.0;
  return UnitDescriptor::from_unit({std::cos(r), std::sin(r)});
}

inline std::vector<Label> iota_labels(std::size_t n, Label start = 0) {
  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<Label>(i);
  return out;
}

/// Random batch: anchors uniform on the sphere, positives a noisy copy, so
/// distances cover a realistic range.
inline PairBatch random_batch(std::size_t n, std::size_t q, Rng& rng, double spread = 0.5) {
  std::normal_distribution<double> noise(0.0, spread / std::sqrt(static_cast<double>(q)));
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
  return PairBatch::from_rows(std::move(a), std::move(p), iota_labels(n, 100));
}

inline std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
  return out;
}

/// Random orthogonal matrix (QR of a Gaussian matrix by Gram-Schmidt).
inline Matrix random_rotation(std::size_t q, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix m(q, q);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t k = 0; k < q; ++k) m(i, k) = normal(rng);
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < q; ++k) dot += m(i, k) * m(j, k);
      for (std::size_t k = 0; k < q; ++k) m(i, k) -= dot * m(j, k);
    }
    const double n = norm(m.row(i));
    for (std::size_t k = 0; k < q; ++k) m(i, k) /= n;
  }
  return m;
}

inline Matrix rotate_rows(const Matrix& rows, const Matrix& rot) {
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    for (std::size_t r = 0; r < rot.rows(); ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < rows.cols(); ++k) s += rot(r, k) * rows(i, k);
      out(i, r) = s;
    }
  }
  project_rows_to_sphere(out);
  return out;
}

}  // namespace sosr::testing

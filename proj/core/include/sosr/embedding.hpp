#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sosr {

using Label = std::int64_t;

/// Dense row-major matrix of doubles. Rows are descriptors in most uses.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A q-dimensional vector with unit Euclidean norm (|‖v‖ - 1| <= 1e-9), q >= 2.
class UnitDescriptor {
 public:
  static constexpr double kNormTolerance = 1e-9;

  /// Wraps values that are already unit norm; throws kNormViolation otherwise.
  static UnitDescriptor from_unit(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }

  friend bool operator==(const UnitDescriptor&, const UnitDescriptor&) = default;

 private:
  explicit UnitDescriptor(std::vector<double> values) : values_(std::move(values)) {}
  friend UnitDescriptor project_to_sphere(std::span<const double> v);

  std::vector<double> values_;
};

/// Sum of squares in ascending index order, then sqrt.
double norm(std::span<const double> v);

/// v / ‖v‖. Throws kZeroNorm on a zero (or non-finite) norm.
UnitDescriptor project_to_sphere(std::span<const double> v);

/// In-place row normalisation; same arithmetic as project_to_sphere.
void project_rows_to_sphere(Matrix& m);

/// ‖u - v‖₂ by the explicit difference formula, summed in ascending index order.
double l2_distance(std::span<const double> u, std::span<const double> v);
double l2_distance(const UnitDescriptor& u, const UnitDescriptor& v);

/// Matched descriptor pairs (x_i, x_i⁺) with one distinct class label per pair.
class PairBatch {
 public:
  PairBatch(const std::vector<UnitDescriptor>& anchors, const std::vector<UnitDescriptor>& positives,
            std::vector<Label> labels);

  /// Rows of `anchors` / `positives` must already be unit norm.
  static PairBatch from_rows(Matrix anchors, Matrix positives, std::vector<Label> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return anchors_.cols(); }

  const Matrix& anchors() const noexcept { return anchors_; }
  const Matrix& positives() const noexcept { return positives_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }

  std::span<const double> anchor(std::size_t i) const noexcept { return anchors_.row(i); }
  std::span<const double> positive(std::size_t i) const noexcept { return positives_.row(i); }

 private:
  PairBatch(Matrix anchors, Matrix positives, std::vector<Label> labels, bool validate);

  Matrix anchors_;
  Matrix positives_;
  std::vector<Label> labels_;
};

/// N×M L2 distances with tags naming the lists the axes came from.
struct DistanceMatrix {
  Matrix entries;
  std::string row_source;
  std::string col_source;

  double operator()(std::size_t i, std::size_t j) const noexcept { return entries(i, j); }
  std::size_t rows() const noexcept { return entries.rows(); }
  std::size_t cols() const noexcept { return entries.cols(); }
};

/// entries(i, j) == l2_distance(a[i], b[j]) bit for bit.
DistanceMatrix pairwise_distances(std::span<const UnitDescriptor> a, std::span<const UnitDescriptor> b,
                                  std::string row_source = "a", std::string col_source = "b");

/// Row-matrix form used by the loss and KNN code; no unit-norm requirement.
Matrix pairwise_distances(const Matrix& a, const Matrix& b);

}  // namespace sosr

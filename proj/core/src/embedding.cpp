#include "sosr/embedding.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "sosr/error.hpp"
#include "sosr/parallel.hpp"

namespace sosr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kZeroNorm: return "zero norm";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kNoNegatives: return "no negatives available";
    case ErrorCode::kNondifferentiable: return "nondifferentiable point";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kDegenerateConcentration: return "degenerate concentration";
    case ErrorCode::kMissingLabel: return "missing label";
    case ErrorCode::kInfeasible: return "infeasible request";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported version";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kLabelCountMismatch: return "label-count mismatch";
    case ErrorCode::kNormViolation: return "norm violation";
    case ErrorCode::kNotNormalized: return "descriptors not normalized";
    case ErrorCode::kBadSidecar: return "bad sidecar";
  }
  return "unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kNondifferentiable:
    case ErrorCode::kDivergence:
    case ErrorCode::kDegenerateConcentration:
    case ErrorCode::kIo:
      return false;
    default:
      return true;
  }
}

namespace {

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void check_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm(m.row(i));
    if (!(std::abs(n - 1.0) <= UnitDescriptor::kNormTolerance)) {
      throw Error(ErrorCode::kNormViolation,
                  std::string(what) + " row " + std::to_string(i) + " has norm " + std::to_string(n));
    }
  }
}

}  // namespace

UnitDescriptor UnitDescriptor::from_unit(std::vector<double> values) {
  if (values.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor dimension must be >= 2");
  }
  const double n = norm(values);
  if (!(std::abs(n - 1.0) <= kNormTolerance)) {
    throw Error(ErrorCode::kNormViolation, "descriptor is not unit norm (norm " + std::to_string(n) + ")");
  }
  return UnitDescriptor(std::move(values));
}

double norm(std::span<const double> v) {
  double acc = 0.0;
  for (const double x : v) acc += x * x;
  return std::sqrt(acc);
}

UnitDescriptor project_to_sphere(std::span<const double> v) {
  if (v.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor dimension must be >= 2");
  }
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kZeroNorm, "zero norm: cannot project a degenerate descriptor");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return UnitDescriptor(std::move(out));
}

void project_rows_to_sphere(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const double n = norm(row);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::kZeroNorm, "zero norm in row " + std::to_string(i));
    }
    for (double& x : row) x /= n;
  }
}

double l2_distance(std::span<const double> u, std::span<const double> v) {
  check_dims(u.size(), v.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double l2_distance(const UnitDescriptor& u, const UnitDescriptor& v) { return l2_distance(u.values(), v.values()); }

PairBatch::PairBatch(const std::vector<UnitDescriptor>& anchors, const std::vector<UnitDescriptor>& positives,
                     std::vector<Label> labels) {
  if (anchors.size() != positives.size() || anchors.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "anchors, positives and labels must have equal length");
  }
  if (anchors.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const std::size_t q = anchors.front().dim();
  Matrix a(anchors.size(), q), p(anchors.size(), q);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    check_dims(anchors[i].dim(), q);
    check_dims(positives[i].dim(), q);
    std::copy(anchors[i].values().begin(), anchors[i].values().end(), a.row(i).begin());
    std::copy(positives[i].values().begin(), positives[i].values().end(), p.row(i).begin());
  }
  *this = PairBatch(std::move(a), std::move(p), std::move(labels), false);
  // Descriptors were unit on construction; only label uniqueness is left.
  std::unordered_set<Label> seen;
  for (const Label z : labels_) {
    if (!seen.insert(z).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate label " + std::to_string(z) + " in batch");
    }
  }
}

PairBatch PairBatch::from_rows(Matrix anchors, Matrix positives, std::vector<Label> labels) {
  return PairBatch(std::move(anchors), std::move(positives), std::move(labels), true);
}

PairBatch::PairBatch(Matrix anchors, Matrix positives, std::vector<Label> labels, bool validate)
    : anchors_(std::move(anchors)), positives_(std::move(positives)), labels_(std::move(labels)) {
  if (!validate) return;
  if (anchors_.rows() != labels_.size() || positives_.rows() != labels_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "anchors, positives and labels must have equal length");
  }
  if (labels_.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  check_dims(anchors_.cols(), positives_.cols());
  if (anchors_.cols() < 2) throw Error(ErrorCode::kInvalidArgument, "descriptor dimension must be >= 2");
  check_unit_rows(anchors_, "anchor");
  check_unit_rows(positives_, "positive");
  std::unordered_set<Label> seen;
  for (const Label z : labels_) {
    if (!seen.insert(z).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate label " + std::to_string(z) + " in batch");
    }
  }
}

Matrix pairwise_distances(const Matrix& a, const Matrix& b) {
  check_dims(a.cols(), b.cols());
  const std::size_t n = a.rows(), m = b.rows(), q = a.cols();
  // Column-major copy of b so the inner loop runs over j. Every entry still
  // accumulates its squared differences in ascending k, matching l2_distance.
  std::vector<double> bt(q * m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < q; ++k) bt[k * m + j] = b(j, k);
  }
  Matrix out(n, m);
  parallel_for(n, [&](std::size_t i) {
    auto acc = out.row(i);
    const auto ai = a.row(i);
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = ai[k];
      const double* col = bt.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) {
        const double d = aik - col[j];
        acc[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < m; ++j) acc[j] = std::sqrt(acc[j]);
  });
  return out;
}

DistanceMatrix pairwise_distances(std::span<const UnitDescriptor> a, std::span<const UnitDescriptor> b,
                                  std::string row_source, std::string col_source) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kInvalidArgument, "pairwise_distances needs non-empty lists");
  const std::size_t q = a.front().dim();
  auto pack = [q](std::span<const UnitDescriptor> list) {
    Matrix m(list.size(), q);
    for (std::size_t i = 0; i < list.size(); ++i) {
      check_dims(list[i].dim(), q);
      std::copy(list[i].values().begin(), list[i].values().end(), m.row(i).begin());
    }
    return m;
  };
  return DistanceMatrix{pairwise_distances(pack(a), pack(b)), std::move(row_source), std::move(col_source)};
}

}  // namespace sosr

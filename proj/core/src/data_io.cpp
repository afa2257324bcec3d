#include "sosr/data_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <nlohmann/json.hpp>

#include "sosr/error.hpp"

namespace sosr {

static_assert(std::endian::native == std::endian::little, "descriptor I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::vector<char>& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

// f32 rounding of a unit row that survives load (project in f64) followed by
// save (round to f32) unchanged. Converges in one or two rounds in practice.
std::vector<float> stable_f32_row(std::span<const double> row) {
  std::vector<float> f(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) f[k] = static_cast<float>(row[k]);
  std::vector<double> widened(row.size());
  for (int round = 0; round < 8; ++round) {
    for (std::size_t k = 0; k < f.size(); ++k) widened[k] = f[k];
    const double n = norm(widened);
    bool fixed = true;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const auto g = static_cast<float>(widened[k] / n);
      if (g != f[k]) {
        f[k] = g;
        fixed = false;
      }
    }
    if (fixed) break;
  }
  return f;
}

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

nlohmann::json read_sidecar(const std::filesystem::path& path) {
  const auto bytes = read_all(sidecar_path(path));
  auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("labels") || !j["labels"].is_array()) {
    throw Error(ErrorCode::kBadSidecar, "sidecar " + sidecar_path(path).string() + " is not a valid label file");
  }
  return j;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void save_descriptors(const LabeledDescriptorSet& set, const std::filesystem::path& path,
                      const std::string& provenance) {
  set.validate();
  std::vector<char> buf;
  buf.reserve(kDescriptorHeaderSize + set.size() * set.dim() * 4);
  for (const char c : kDescriptorMagic) buf.push_back(c);
  put<std::uint32_t>(buf, kDescriptorVersion);
  put<std::uint64_t>(buf, set.size());
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(set.dim()));
  put<std::uint32_t>(buf, kFlagUnitNormalized);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (const float x : stable_f32_row(set.descriptors.row(i))) put<float>(buf, x);
  }
  write_all(path, buf.data(), buf.size());

  nlohmann::json side = {{"labels", set.labels}, {"provenance", provenance}};
  if (!set.split.empty()) side["split"] = set.split;
  const std::string text = side.dump(2) + "\n";
  write_all(sidecar_path(path), text.data(), text.size());
}

LabeledDescriptorSet round_trip_f32(const LabeledDescriptorSet& set) {
  set.validate();
  LabeledDescriptorSet out = set;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto f = stable_f32_row(set.descriptors.row(i));
    auto row = out.descriptors.row(i);
    for (std::size_t k = 0; k < f.size(); ++k) row[k] = f[k];
    const double n = norm(row);
    for (double& x : row) x /= n;
  }
  return out;
}

LabeledDescriptorSet load_descriptors(const std::filesystem::path& path, const LoadOptions& options) {
  const auto buf = read_all(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), kDescriptorMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "bad magic in " + path.string() + " (expected SOSD)");
  }
  if (buf.size() < kDescriptorHeaderSize) {
    throw Error(ErrorCode::kTruncated, "truncated header in " + path.string());
  }
  const auto version = get<std::uint32_t>(buf, 4);
  if (version != kDescriptorVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "unsupported descriptor file version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(buf, 8);
  const auto dim = get<std::uint32_t>(buf, 16);
  const auto flags = get<std::uint32_t>(buf, 20);
  if (dim < 2 && count > 0) throw Error(ErrorCode::kInvalidArgument, "descriptor dimension must be >= 2");
  const std::uint64_t payload = count * dim * 4;
  if (buf.size() - kDescriptorHeaderSize != payload) {
    throw Error(ErrorCode::kTruncated, "payload of " + path.string() + " is " +
                                           std::to_string(buf.size() - kDescriptorHeaderSize) + " bytes, expected " +
                                           std::to_string(payload));
  }
  const bool unit = (flags & kFlagUnitNormalized) != 0;
  if (!unit && !options.normalize) {
    throw Error(ErrorCode::kNotNormalized, path.string() + " is not flagged unit-normalized; load with normalize");
  }

  const auto side = read_sidecar(path);
  LabeledDescriptorSet set;
  try {
    set.labels = side["labels"].get<std::vector<Label>>();
    if (side.contains("split")) set.split = side["split"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadSidecar, std::string("sidecar: ") + e.what());
  }
  if (set.labels.size() != count) {
    throw Error(ErrorCode::kLabelCountMismatch, "label-count mismatch: " + std::to_string(count) +
                                                    " descriptors, " + std::to_string(set.labels.size()) + " labels");
  }

  set.descriptors = Matrix(count, dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto row = set.descriptors.row(i);
    for (std::uint32_t k = 0; k < dim; ++k) {
      row[k] = get<float>(buf, kDescriptorHeaderSize + (i * dim + k) * 4);
    }
    const double n = norm(row);
    if (unit && !(std::abs(n - 1.0) <= kStoredNormTolerance)) {
      throw Error(ErrorCode::kNormViolation,
                  "norm violation: row " + std::to_string(i) + " has norm " + std::to_string(n));
    }
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::kZeroNorm, "row " + std::to_string(i) + " has zero or non-finite norm");
    }
    for (double& x : row) x /= n;
  }
  set.validate();
  return set;
}

std::string load_provenance(const std::filesystem::path& path) {
  const auto side = read_sidecar(path);
  return side.value("provenance", std::string{});
}

}  // namespace sosr

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sosr/eval.hpp"

namespace sosr {

// Descriptor file layout (little-endian):
//   0  char[4] magic "SOSD"
//   4  u32     version (1)
//   8  u64     count
//  16  u32     dim
//  20  u32     flags, bit0 = rows are unit-normalised
//  24  f32     payload[count * dim], row-major
// Labels, optional split tags and a provenance string live in a JSON
// sidecar at "<path>.json".
inline constexpr char kDescriptorMagic[4] = {'S', 'O', 'S', 'D'};
inline constexpr std::uint32_t kDescriptorVersion = 1;
inline constexpr std::uint32_t kFlagUnitNormalized = 1u << 0;
inline constexpr std::size_t kDescriptorHeaderSize = 24;
/// Tolerance on row norms of flagged files (they are stored as f32).
inline constexpr double kStoredNormTolerance = 1e-5;

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Writes the binary file and its sidecar. Rows are rounded to f32 such that
/// loading and saving again reproduces the same bytes.
void save_descriptors(const LabeledDescriptorSet& set, const std::filesystem::path& path,
                      const std::string& provenance = "");

/// The set load_descriptors would return after save_descriptors.
LabeledDescriptorSet round_trip_f32(const LabeledDescriptorSet& set);

struct LoadOptions {
  /// Accept files without the unit flag by projecting every row.
  bool normalize = false;
};

LabeledDescriptorSet load_descriptors(const std::filesystem::path& path, const LoadOptions& options = {});

/// Provenance string recorded in a file's sidecar.
std::string load_provenance(const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t classes = 100;
  std::size_t samples_per_class = 2;
  std::size_t q = 128;
  double kappa_intra = 100.0;
  double kappa_inter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Two-level vMF mixture: class centres from vMF(e_1, κ_inter), then samples
/// from vMF(μ_i, κ_intra). Labels are 0..M-1, rows grouped by class.
LabeledDescriptorSet generate_synthetic(const SyntheticSpec& spec);

}  // namespace sosr

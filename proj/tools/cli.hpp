#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sosr/data_io.hpp"
#include "sosr/loss.hpp"
#include "sosr/optim.hpp"

namespace sosr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string tool_version();

// Gradient-check workload, shared with the acceptance binary.

struct GradcheckOptions {
  std::size_t trials = 108;
  std::vector<std::size_t> batch_sizes = {4, 8, 16};
  std::vector<std::size_t> dims = {3, 32, 128};
  double h = 1e-5;
  double threshold = 1e-4;
  std::uint64_t seed = 0;
};

struct GradcheckTrial {
  std::size_t trial = 0;
  std::size_t n = 0;
  std::size_t q = 0;
  LossConfig loss;
  std::optional<double> max_relative_error;  // empty when no smooth point was found
  int resamples = 0;
  std::string note;
};

struct GradcheckReport {
  std::vector<GradcheckTrial> trials;
  double max_relative_error = 0.0;
  std::size_t skipped = 0;
  bool pass = false;
};

/// Trial t cycles through batch size x dimension x {HT, QHT} x {off, same-side,
/// full-batch} and draws its batch from stream t of the seed.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

nlohmann::json to_json(const GradcheckReport& report, const GradcheckOptions& options);

/// Random batch: anchors uniform on the sphere, positives perturbed copies.
PairBatch random_pair_batch(std::size_t n, std::size_t q, std::uint64_t seed, std::uint64_t stream);

// Sweep cells.

struct CellResult {
  std::size_t n = 0;
  std::size_t k = 0;
  std::optional<double> fpr95;
  std::string error;
};

/// Trains on `data` with (N, K) and scores FPR@95 of the f32-rounded result,
/// exactly as `train` followed by `eval` on the written file.
CellResult run_cell(const LabeledDescriptorSet& data, TrainConfig cfg, const EvalOptions& eval, std::size_t n,
                    std::size_t k);

/// Caps requested pair counts at what the set can provide.
EvalOptions clamp_pair_counts(const LabeledDescriptorSet& set, EvalOptions options, std::ostream* warn);

}  // namespace sosr::cli

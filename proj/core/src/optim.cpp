#include <cmath>
#include <string>

#include "sosr/error.hpp"
#include "sosr/optim.hpp"

namespace sosr {

void TrainConfig::validate() const {
  loss.validate();
  if (!(sgd.lr0 > 0.0) || !(sgd.decay_factor > 0.0)) throw Error(ErrorCode::kInvalidArgument, "SGD rates must be > 0");
  if (!(adam.alpha > 0.0) || !(adam.eps > 0.0)) throw Error(ErrorCode::kInvalidArgument, "Adam rates must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Adam betas must be in [0, 1)");
  }
  if (pairs_per_batch < 2) throw Error(ErrorCode::kInvalidArgument, "pairs per batch must be >= 2");
  if (loss.enable_sosr && loss.sos_neighbor_mode == SosNeighborMode::kSameSide && loss.k + 1 > pairs_per_batch) {
    throw Error(ErrorCode::kInvalidArgument, "K=" + std::to_string(loss.k) + " needs at least K+1 pairs per batch");
  }
}

double sgd_learning_rate(const SgdConfig& cfg, std::size_t epoch) {
  return epoch < cfg.decay_epoch ? cfg.lr0 : cfg.lr0 / cfg.decay_factor;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 const AdamConfig& cfg, std::uint64_t step) {
  const double t = static_cast<double>(step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[k] / bias1;
    const double v_hat = v[k] / bias2;
    params[k] -= cfg.alpha * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void optimizer_step(Matrix& params, const Matrix& grads, OptimizerState& state, const TrainConfig& cfg,
                    std::uint64_t step, std::size_t epoch) {
  if (grads.rows() != params.rows() || grads.cols() != params.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient shape does not match parameters");
  }
  if (step < 1) throw Error(ErrorCode::kInvalidArgument, "optimizer step counts from 1");
  for (const double g : grads.data()) {
    if (!std::isfinite(g)) throw Error(ErrorCode::kDivergence, "divergence: non-finite gradient");
  }
  if (cfg.optimizer == OptimizerKind::kSGD) {
    const double lr = sgd_learning_rate(cfg.sgd, epoch);
    auto p = params.data();
    const auto g = grads.data();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  } else {
    if (state.m.rows() != params.rows() || state.m.cols() != params.cols()) {
      state.m = Matrix(params.rows(), params.cols());
      state.v = Matrix(params.rows(), params.cols());
    }
    adam_update(params.data(), grads.data(), state.m.data(), state.v.data(), cfg.adam, step);
  }
  try {
    project_rows_to_sphere(params);
  } catch (const Error& e) {
    throw Error(ErrorCode::kDivergence, std::string("divergence: ") + e.what());
  }
}

}  // namespace sosr

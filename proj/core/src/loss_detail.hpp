#pragma once

#include <vector>

#include "sosr/loss.hpp"

namespace sosr::detail {

struct BatchDistances {
  Matrix aa;  // d(x_i, x_j)
  Matrix ap;  // d(x_i, x_j⁺); d(x_i⁺, x_j) is ap(j, i)
  Matrix pp;  // d(x_i⁺, x_j⁺)
};

BatchDistances compute_distances(const Matrix& anchors, const Matrix& positives);
void check_batch_size(std::size_t n);
void check_k(std::size_t k, std::size_t n);
HardestNegative mine(const BatchDistances& d, std::size_t i);
std::vector<std::size_t> nearest(const Matrix& same_side, std::size_t i, std::size_t k);
std::vector<std::size_t> neighbor_set(const BatchDistances& d, std::size_t i, std::size_t k);
std::vector<std::size_t> all_others(std::size_t i, std::size_t n);
LossSelection select(const BatchDistances& d, const LossConfig& cfg);
LossGradReport evaluate(const Matrix& a, const Matrix& p, const std::vector<Label>& labels, const LossSelection& sel,
                        const LossConfig& cfg, bool with_gradient, const BatchDistances* cache);

}  // namespace sosr::detail

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "patchdenoise/tensor.hpp"

namespace patchdenoise {

template <typename T>
struct AdamState {
  std::size_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update with bias correction over every parameter in `params`,
/// reading each parameter's accumulated grad (missing grad counts as zero).
/// Moments are allocated on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, double lr);

/// Single-cycle cosine annealing from eta0 down to eta_min over total_epochs.
struct CosineSchedule {
  double eta0 = 1e-2;
  double eta_min = 1e-2 / 160.0;
  int total_epochs = 80;
};

/// eta_min + (eta0 - eta_min) * (1 + cos(pi * epoch / total_epochs)) / 2
double lr_at(const CosineSchedule& schedule, int epoch);

}  // namespace patchdenoise

#include "patchdenoise/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "patchdenoise/error.hpp"

namespace patchdenoise {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw UsageError("adam_step: learning rate must be positive");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), T{0});
      state.second_moment.emplace_back(p.numel(), T{0});
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw UsageError("adam_step: optimizer state tracks " +
                     std::to_string(state.first_moment.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const T eps = static_cast<T>(state.epsilon);
  const T step = static_cast<T>(lr);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != p.numel()) {
      throw UsageError("adam_step: moment size mismatch for parameter " + std::to_string(k));
    }
    auto data = p.mutable_data();
    const auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T g = grad.empty() ? T{0} : grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const T m_hat = m[i] * c1;
      const T v_hat = v[i] * c2;
      data[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

double lr_at(const CosineSchedule& schedule, int epoch) {
  if (schedule.total_epochs <= 0) throw UsageError("lr_at: total_epochs must be positive");
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw UsageError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(schedule.total_epochs) + "]");
  }
  const double phase = std::numbers::pi * epoch / schedule.total_epochs;
  return schedule.eta_min + 0.5 * (schedule.eta0 - schedule.eta_min) * (1.0 + std::cos(phase));
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, double);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, double);

}  // namespace patchdenoise

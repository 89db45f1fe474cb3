#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

struct AdamOptions {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Classic L2 form: lambda * theta is added to the gradient before the
  // moment updates.
  double weight_decay = 0.001;
};

template <std::floating_point T>
class AdamState {
 public:
  AdamState() = default;

  AdamState(AdamOptions options, std::span<const Tensor<T>> params) : options_(options) {
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const auto& p : params) {
      first_.emplace_back(p.shape(), std::vector<T>(p.size(), T{0}));
      second_.emplace_back(p.shape(), std::vector<T>(p.size(), T{0}));
    }
  }

  const AdamOptions& options() const noexcept { return options_; }
  std::uint64_t step() const noexcept { return step_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return first_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return second_; }

  /// One bias-corrected Adam update of params in place.
  void update(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads) {
    if (params.size() != first_.size() || grads.size() != params.size()) {
      throw DimensionError("adam: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                           " grads, state for " + std::to_string(first_.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (params[p].shape() != grads[p].shape() || params[p].shape() != first_[p].shape()) {
        throw DimensionError("adam: parameter " + std::to_string(p) + " shape " + shape_string(params[p].shape()) +
                             " vs gradient " + shape_string(grads[p].shape()));
      }
    }
    ++step_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto theta = params[p].data();
      auto grad = grads[p].data();
      auto m = first_[p].data();
      auto v = second_[p].data();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = static_cast<double>(grad[i]) + options_.weight_decay * static_cast<double>(theta[i]);
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double m_hat = mi / bias1;
        const double v_hat = vi / bias2;
        theta[i] = static_cast<T>(static_cast<double>(theta[i]) -
                                  options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon));
      }
    }
  }

 private:
  AdamOptions options_;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
  std::uint64_t step_ = 0;
};

template <std::floating_point T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state) {
  state.update(params, grads);
}

}  // namespace handdi

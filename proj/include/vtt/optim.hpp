#pragma once

#include <vector>

#include "vtt/tensor.hpp"

namespace vtt {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip applied before the update; 0 disables it.
  double max_grad_norm = 0.0;
};

template <class T>
struct AdamState {
  AdamOptions options;
  long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;
  AdamState(const std::vector<Tensor<T>>& params, AdamOptions opts);
};

/// One bias-corrected Adam update of `params` from their accumulated grads.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

/// Global L2 norm of the accumulated gradients.
template <class T>
double grad_norm(const std::vector<Tensor<T>>& params);

template <class T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace vtt

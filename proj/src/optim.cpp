#include "vtt/optim.hpp"

#include <cmath>

namespace vtt {

template <class T>
AdamState<T>::AdamState(const std::vector<Tensor<T>>& params, AdamOptions opts) : options(opts) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.numel(), T{0});
    v.emplace_back(p.numel(), T{0});
  }
}

template <class T>
double grad_norm(const std::vector<Tensor<T>>& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.node()->grad) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (params.size() != state.m.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() != state.m[i].size()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                       shape_str(params[i].shape()) + " but state was built for " +
                       std::to_string(state.m[i].size()) + " entries");
    }
  }
  const auto& o = state.options;
  double clip = 1.0;
  if (o.max_grad_norm > 0.0) {
    double n = grad_norm(params);
    if (n > o.max_grad_norm) clip = o.max_grad_norm / (n + 1e-12);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T lr_t = static_cast<T>(o.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(o.eps);
  const T c = static_cast<T>(clip);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    const auto& g = params[i].node()->grad;
    auto w = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      T gj = g[j] * c;
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      w[j] -= lr_t * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);
template double grad_norm(const std::vector<Tensor<float>>&);
template double grad_norm(const std::vector<Tensor<double>>&);

}  // namespace vtt

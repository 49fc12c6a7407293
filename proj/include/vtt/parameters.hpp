#pragma once

#include <string>
#include <vector>

#include "vtt/rng.hpp"
#include "vtt/tensor.hpp"

namespace vtt {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered registry of trainable tensors. Models keep handles to the same
/// nodes, so writing through `entries()` updates the model in place.
template <class T>
class ParameterSet {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    for (const auto& e : entries_) {
      if (e.name == name) throw UsageError("duplicate parameter name: " + name);
    }
    t.set_requires_grad(true);
    entries_.push_back({name, t});
    return t;
  }

  const std::vector<NamedTensor<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e.tensor;
    }
    return nullptr;
  }

  /// Total scalar count across all registered tensors.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Copy values by name; every local entry must exist in `src` with the same shape.
  template <class U>
  void copy_from(const ParameterSet<U>& src) {
    for (auto& e : entries_) {
      const Tensor<U>* s = src.find(e.name);
      if (!s) throw ConfigError("missing parameter in source: " + e.name);
      if (s->shape() != e.tensor.shape()) {
        throw ShapeError("parameter " + e.name + " has shape " + shape_str(s->shape()) + ", expected " +
                         shape_str(e.tensor.shape()));
      }
      auto dst = e.tensor.mutable_data();
      auto sv = s->data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(sv[i]);
    }
  }

 private:
  std::vector<NamedTensor<T>> entries_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
Tensor<T> fan_in_uniform(int fan_in, int fan_out, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(static_cast<std::size_t>(fan_in) * fan_out);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from({fan_in, fan_out}, std::move(v));
}

/// Normal(0, stddev) truncated at +-2 stddev.
template <class T>
Tensor<T> truncated_normal(Shape shape, double stddev, SeededRng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(stddev));
  return Tensor<T>::from(std::move(shape), std::move(v));
}

}  // namespace vtt

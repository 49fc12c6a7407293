#pragma once

#include <string>

#include "vtt/ops.hpp"
#include "vtt/parameters.hpp"

namespace vtt {

enum class Activation { kNone, kRelu, kGelu };

template <class T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kGelu: return gelu(x);
    case Activation::kNone: break;
  }
  return x;
}

template <class T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [1 x out], may be undefined

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
  int in_features() const { return weight.dim(0); }
  int out_features() const { return weight.dim(1); }
};

template <class T>
Linear<T> make_linear(ParameterSet<T>& ps, const std::string& name, int in, int out, SeededRng& rng,
                      bool with_bias = true) {
  Linear<T> l;
  l.weight = ps.add(name + ".weight", fan_in_uniform<T>(in, out, rng));
  if (with_bias) l.bias = ps.add(name + ".bias", Tensor<T>::zeros({1, out}));
  return l;
}

/// Two linear layers with an activation after the first and, optionally, after
/// the second.
template <class T>
struct Mlp2 {
  Linear<T> fc1;
  Linear<T> fc2;
  Activation hidden = Activation::kRelu;
  Activation output = Activation::kNone;

  Tensor<T> operator()(const Tensor<T>& x) const {
    return activate(fc2(activate(fc1(x), hidden)), output);
  }
};

template <class T>
Mlp2<T> make_mlp2(ParameterSet<T>& ps, const std::string& name, int in, int hidden, int out, SeededRng& rng,
                  Activation hidden_act = Activation::kRelu, Activation out_act = Activation::kNone) {
  Mlp2<T> m;
  m.fc1 = make_linear(ps, name + ".fc1", in, hidden, rng);
  m.fc2 = make_linear(ps, name + ".fc2", hidden, out, rng);
  m.hidden = hidden_act;
  m.output = out_act;
  return m;
}

}  // namespace vtt

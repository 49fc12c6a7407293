#pragma once

#include <memory>
#include <vector>

#include "vtt/tensor.hpp"

namespace vtt {

// Elementwise binary ops require identical shapes.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise minimum; the gradient goes to the smaller input (ties: `a`).
template <class T> Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b);

/// x[r x c] + row[1 x c], broadcast over rows.
template <class T> Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row);
/// x[(k*R) x c] + block[R x c], block repeated k times down the rows.
template <class T> Tensor<T> add_tiled(const Tensor<T>& x, const Tensor<T>& block);

template <class T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <class T> Tensor<T> square(const Tensor<T>& x);
template <class T> Tensor<T> exp(const Tensor<T>& x);
/// Natural log; throws ValidationError on non-positive input.
template <class T> Tensor<T> log(const Tensor<T>& x);
/// 1/x; throws ValidationError on zero.
template <class T> Tensor<T> reciprocal(const Tensor<T>& x);
template <class T> Tensor<T> softplus(const Tensor<T>& x);
template <class T> Tensor<T> tanh(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> relu(const Tensor<T>& x);
/// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <class T> Tensor<T> gelu(const Tensor<T>& x);
/// Hard clamp; zero gradient outside (lo, hi).
template <class T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[m x k] * w[k x n] + bias[1 x n]; `bias` may be undefined.
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);
/// [r x c] -> [r x 1]
template <class T> Tensor<T> row_sum(const Tensor<T>& x);

template <class T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <class T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <class T> Tensor<T> slice_cols(const Tensor<T>& x, int start, int count);
template <class T> Tensor<T> slice_rows(const Tensor<T>& x, int start, int count);
/// out[i] = x[index[i]]; backward scatter-adds.
template <class T> Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& index);

/// Row-wise softmax with max subtraction.
template <class T> Tensor<T> softmax_rows(const Tensor<T>& x);
/// Per-row normalization over the last extent, epsilon 1e-5 on the variance.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias);
/// Mean of max(x,0) - x t + log(1 + exp(-|x|)); targets must be 0 or 1.
template <class T> Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets);

/// Row-stochastic attention weights of one call: probs[((b*heads + h)*R + i)*R + j].
template <class T>
struct AttentionWeights {
  int batch = 0;
  int heads = 0;
  int tokens = 0;
  Buffer<T> probs;

  const T* head(int b, int h) const {
    return probs.data() + (static_cast<std::size_t>(b) * heads + h) * tokens * tokens;
  }
};

/// Scaled dot-product attention over `batch` independent sequences of equal
/// length stacked along the rows. q, k: [(batch*R) x dk_total], v: [(batch*R) x
/// dv_total]; each is split column-wise into `heads` contiguous slices.
/// Output: [(batch*R) x dv_total], head outputs concatenated in head order.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               int batch, int heads, T scale_factor,
                               std::shared_ptr<const AttentionWeights<T>>* weights_out = nullptr);

// Operator sugar for the common cases.
template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace vtt

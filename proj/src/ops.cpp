#include "vtt/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>

namespace vtt {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstStrided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using MutStrided = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

template <class T>
Node<T>& parent(Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

void require_rank2(const Shape& s, const char* op) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(s));
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& x, F f, D dfdx) {
  auto xs = x.data();
  Buffer<T> y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = f(xs[i]);
  return make_result<T>(x.shape(), std::move(y), {x.node_ptr()}, [dfdx](Node<T>& s) {
    auto& p = parent(s, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i] * dfdx(p.value[i], s.value[i]);
  });
}

template <class T>
void accumulate(Node<T>& p, const Buffer<T>& g, T sign = T{1}) {
  if (!p.requires_grad) return;
  auto& dst = p.grad_buffer();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += sign * g[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  Buffer<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()}, [](Node<T>& s) {
    accumulate(parent(s, 0), s.grad);
    accumulate(parent(s, 1), s.grad);
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "sub");
  Buffer<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()}, [](Node<T>& s) {
    accumulate(parent(s, 0), s.grad);
    accumulate(parent(s, 1), s.grad, T{-1});
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  Buffer<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()}, [](Node<T>& s) {
    auto& pa = parent(s, 0);
    auto& pb = parent(s, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i] * pa.value[i];
    }
  });
}

template <class T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "minimum");
  Buffer<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(a.data()[i], b.data()[i]);
  return make_result<T>(a.shape(), std::move(y), {a.node_ptr(), b.node_ptr()}, [](Node<T>& s) {
    auto& pa = parent(s, 0);
    auto& pb = parent(s, 1);
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      bool take_a = pa.value[i] <= pb.value[i];
      Node<T>& dst = take_a ? pa : pb;
      if (dst.requires_grad) dst.grad_buffer()[i] += s.grad[i];
    }
  });
}

template <class T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
  const int c = x.shape().back();
  if (static_cast<int>(row.numel()) != c) {
    throw ShapeError("add_row: row of " + shape_str(row.shape()) + " cannot broadcast over " +
                     shape_str(x.shape()));
  }
  Buffer<T> y(x.data().begin(), x.data().end());
  const std::size_t rows = x.numel() / static_cast<std::size_t>(c);
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) y[r * c + j] += row.data()[j];
  return make_result<T>(x.shape(), std::move(y), {x.node_ptr(), row.node_ptr()}, [c](Node<T>& s) {
    accumulate(parent(s, 0), s.grad);
    auto& pr = parent(s, 1);
    if (!pr.requires_grad) return;
    auto& g = pr.grad_buffer();
    const std::size_t rows2 = s.grad.size() / static_cast<std::size_t>(c);
    for (std::size_t r = 0; r < rows2; ++r)
      for (int j = 0; j < c; ++j) g[j] += s.grad[r * c + j];
  });
}

template <class T>
Tensor<T> add_tiled(const Tensor<T>& x, const Tensor<T>& block) {
  const std::size_t bn = block.numel();
  if (bn == 0 || x.numel() % bn != 0 || x.shape().back() != block.shape().back()) {
    throw ShapeError("add_tiled: block " + shape_str(block.shape()) + " does not tile " +
                     shape_str(x.shape()));
  }
  Buffer<T> y(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += block.data()[i % bn];
  return make_result<T>(x.shape(), std::move(y), {x.node_ptr(), block.node_ptr()}, [bn](Node<T>& s) {
    accumulate(parent(s, 0), s.grad);
    auto& pb = parent(s, 1);
    if (!pb.requires_grad) return;
    auto& g = pb.grad_buffer();
    for (std::size_t i = 0; i < s.grad.size(); ++i) g[i % bn] += s.grad[i];
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(x, [value](T v) { return v + value; }, [](T, T) { return T{1}; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!(v > T{0})) throw ValidationError("log: input must be positive");
  }
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <class T>
Tensor<T> reciprocal(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (v == T{0}) throw ValidationError("reciprocal: division by zero");
  }
  return unary(x, [](T v) { return T{1} / v; }, [](T, T y) { return -y * y; });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return T{1} / (T{1} + std::exp(-v)); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = static_cast<T>(kGeluC);
  const T a = static_cast<T>(kGeluA);
  return unary(
      x,
      [c, a](T v) { return T{0.5} * v * (T{1} + std::tanh(c * (v + a * v * v * v))); },
      [c, a](T v, T) {
        T u = c * (v + a * v * v * v);
        T t = std::tanh(u);
        T du = c * (T{1} + T{3} * a * v * v);
        return T{0.5} * (T{1} + t) + T{0.5} * v * (T{1} - t * t) * du;
      });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T{1} : T{0}; });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a.shape(), "matmul");
  require_rank2(b.shape(), "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Buffer<T> y(static_cast<std::size_t>(m) * n);
  MutMap<T>(y.data(), m, n).noalias() = ConstMap<T>(a.data().data(), m, k) * ConstMap<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(y), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node<T>& s) {
    auto& pa = parent(s, 0);
    auto& pb = parent(s, 1);
    ConstMap<T> dy(s.grad.data(), m, n);
    if (pa.requires_grad) {
      MutMap<T>(pa.grad_buffer().data(), m, k).noalias() += dy * ConstMap<T>(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MutMap<T>(pb.grad_buffer().data(), k, n).noalias() += ConstMap<T>(pa.value.data(), m, k).transpose() * dy;
    }
  });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require_rank2(x.shape(), "linear");
  require_rank2(w.shape(), "linear");
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && static_cast<int>(bias.numel()) != n) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  Buffer<T> y(static_cast<std::size_t>(m) * n);
  MutMap<T> ym(y.data(), m, n);
  ym.noalias() = ConstMap<T>(x.data().data(), m, k) * ConstMap<T>(w.data().data(), k, n);
  if (has_bias) {
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), n);
  }
  std::vector<std::shared_ptr<Node<T>>> parents{x.node_ptr(), w.node_ptr()};
  if (has_bias) parents.push_back(bias.node_ptr());
  return make_result<T>({m, n}, std::move(y), std::move(parents), [m, k, n](Node<T>& s) {
    auto& px = parent(s, 0);
    auto& pw = parent(s, 1);
    ConstMap<T> dy(s.grad.data(), m, n);
    if (px.requires_grad) {
      MutMap<T>(px.grad_buffer().data(), m, k).noalias() += dy * ConstMap<T>(pw.value.data(), k, n).transpose();
    }
    if (pw.requires_grad) {
      MutMap<T>(pw.grad_buffer().data(), k, n).noalias() += ConstMap<T>(px.value.data(), m, k).transpose() * dy;
    }
    if (s.parents.size() > 2 && parent(s, 2).requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(parent(s, 2).grad_buffer().data(), n) += dy.colwise().sum();
    }
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return make_result<T>({1, 1}, {acc}, {x.node_ptr()}, [](Node<T>& s) {
    auto& p = parent(s, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (auto& v : g) v += s.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <class T>
Tensor<T> row_sum(const Tensor<T>& x) {
  const int r = x.rows(), c = x.cols();
  Buffer<T> y(static_cast<std::size_t>(r), T{0});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[i] += x.data()[static_cast<std::size_t>(i) * c + j];
  return make_result<T>({r, 1}, std::move(y), {x.node_ptr()}, [r, c](Node<T>& s) {
    auto& p = parent(s, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g[static_cast<std::size_t>(i) * c + j] += s.grad[i];
  });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int r = parts[0].rows();
  std::vector<int> widths;
  int total = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& p : parts) {
    require_rank2(p.shape(), "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
    parents.push_back(p.node_ptr());
  }
  Buffer<T> y(static_cast<std::size_t>(r) * total);
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const int w = widths[k];
    for (int i = 0; i < r; ++i)
      std::copy_n(parts[k].data().data() + static_cast<std::size_t>(i) * w, w,
                  y.data() + static_cast<std::size_t>(i) * total + off);
    off += w;
  }
  return make_result<T>({r, total}, std::move(y), std::move(parents), [r, total, widths](Node<T>& s) {
    int o = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = parent(s, k);
      const int w = widths[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < w; ++j)
            g[static_cast<std::size_t>(i) * w + j] += s.grad[static_cast<std::size_t>(i) * total + o + j];
      }
      o += w;
    }
  });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int c = parts[0].cols();
  int total = 0;
  std::vector<std::size_t> sizes;
  std::vector<std::shared_ptr<Node<T>>> parents;
  Buffer<T> y;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
    sizes.push_back(p.numel());
    parents.push_back(p.node_ptr());
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  return make_result<T>({total, c}, std::move(y), std::move(parents), [sizes](Node<T>& s) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto& p = parent(s, k);
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += s.grad[o + i];
      }
      o += sizes[k];
    }
  });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int count) {
  require_rank2(x.shape(), "slice_cols");
  const int r = x.rows(), c = x.cols();
  if (start < 0 || count <= 0 || start + count > c) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_str(x.shape()));
  }
  Buffer<T> y(static_cast<std::size_t>(r) * count);
  for (int i = 0; i < r; ++i)
    std::copy_n(x.data().data() + static_cast<std::size_t>(i) * c + start, count,
                y.data() + static_cast<std::size_t>(i) * count);
  return make_result<T>({r, count}, std::move(y), {x.node_ptr()}, [r, c, start, count](Node<T>& s) {
    auto& p = parent(s, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < count; ++j)
        g[static_cast<std::size_t>(i) * c + start + j] += s.grad[static_cast<std::size_t>(i) * count + j];
  });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, int start, int count) {
  require_rank2(x.shape(), "slice_rows");
  const int r = x.rows(), c = x.cols();
  if (start < 0 || count <= 0 || start + count > r) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t off = static_cast<std::size_t>(start) * c;
  Buffer<T> y(x.data().begin() + off, x.data().begin() + off + static_cast<std::size_t>(count) * c);
  return make_result<T>({count, c}, std::move(y), {x.node_ptr()}, [off](Node<T>& s) {
    auto& p = parent(s, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < s.grad.size(); ++i) g[off + i] += s.grad[i];
  });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& index) {
  require_rank2(x.shape(), "gather_rows");
  const int r = x.rows(), c = x.cols();
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  Buffer<T> y(index.size() * static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= r) throw ShapeError("gather_rows: index out of range");
    std::copy_n(x.data().data() + static_cast<std::size_t>(index[i]) * c, c, y.data() + i * c);
  }
  return make_result<T>({static_cast<int>(index.size()), c}, std::move(y), {x.node_ptr()},
                        [index, c](Node<T>& s) {
                          auto& p = parent(s, 0);
                          if (!p.requires_grad) return;
                          auto& g = p.grad_buffer();
                          for (std::size_t i = 0; i < index.size(); ++i)
                            for (int j = 0; j < c; ++j)
                              g[static_cast<std::size_t>(index[i]) * c + j] += s.grad[i * c + j];
                        });
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const int r = x.rows(), c = x.cols();
  Buffer<T> y(x.numel());
  for (int i = 0; i < r; ++i) {
    const T* in = x.data().data() + static_cast<std::size_t>(i) * c;
    T* out = y.data() + static_cast<std::size_t>(i) * c;
    T mx = *std::max_element(in, in + c);
    T z{0};
    for (int j = 0; j < c; ++j) z += (out[j] = std::exp(in[j] - mx));
    for (int j = 0; j < c; ++j) out[j] /= z;
  }
  return make_result<T>(x.shape(), std::move(y), {x.node_ptr()}, [r, c](Node<T>& s) {
    auto& p = parent(s, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int i = 0; i < r; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * c;
      T dot{0};
      for (int j = 0; j < c; ++j) dot += s.grad[o + j] * s.value[o + j];
      for (int j = 0; j < c; ++j) g[o + j] += s.value[o + j] * (s.grad[o + j] - dot);
    }
  });
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  const int d = x.shape().back();
  if (d < 2) throw ShapeError("layer_norm: feature extent must be at least 2");
  if (static_cast<int>(gain.numel()) != d || static_cast<int>(bias.numel()) != d) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  const std::size_t r = x.numel() / static_cast<std::size_t>(d);
  constexpr T eps = static_cast<T>(1e-5);
  Buffer<T> y(x.numel());
  auto xhat = std::make_shared<Buffer<T>>(x.numel());
  auto inv = std::make_shared<Buffer<T>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const T* in = x.data().data() + i * d;
    T mu{0};
    for (int j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    T is = T{1} / std::sqrt(var + eps);
    (*inv)[i] = is;
    for (int j = 0; j < d; ++j) {
      T h = (in[j] - mu) * is;
      (*xhat)[i * d + j] = h;
      y[i * d + j] = h * gain.data()[j] + bias.data()[j];
    }
  }
  return make_result<T>(x.shape(), std::move(y), {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
                        [d, r, xhat, inv](Node<T>& s) {
                          auto& px = parent(s, 0);
                          auto& pg = parent(s, 1);
                          auto& pb = parent(s, 2);
                          const auto& gv = pg.value;
                          if (pg.requires_grad || pb.requires_grad) {
                            for (std::size_t i = 0; i < r; ++i)
                              for (int j = 0; j < d; ++j) {
                                T dy = s.grad[i * d + j];
                                if (pg.requires_grad) pg.grad_buffer()[j] += dy * (*xhat)[i * d + j];
                                if (pb.requires_grad) pb.grad_buffer()[j] += dy;
                              }
                          }
                          if (!px.requires_grad) return;
                          auto& g = px.grad_buffer();
                          const T inv_d = T{1} / static_cast<T>(d);
                          for (std::size_t i = 0; i < r; ++i) {
                            T sum_dh{0}, sum_dh_h{0};
                            for (int j = 0; j < d; ++j) {
                              T dh = s.grad[i * d + j] * gv[j];
                              sum_dh += dh;
                              sum_dh_h += dh * (*xhat)[i * d + j];
                            }
                            for (int j = 0; j < d; ++j) {
                              T dh = s.grad[i * d + j] * gv[j];
                              g[i * d + j] += (*inv)[i] * (dh - inv_d * sum_dh - (*xhat)[i * d + j] * inv_d * sum_dh_h);
                            }
                          }
                        });
}

template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.numel() != targets.numel()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  for (T t : targets.data()) {
    if (t != T{0} && t != T{1}) throw ValidationError("bce_with_logits: targets must be 0 or 1");
  }
  const std::size_t n = logits.numel();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    T x = logits.data()[i];
    acc += std::max(x, T{0}) - x * targets.data()[i] + std::log1p(std::exp(-std::abs(x)));
  }
  acc /= static_cast<T>(n);
  return make_result<T>({1, 1}, {acc}, {logits.node_ptr(), targets.node_ptr()}, [n](Node<T>& s) {
    auto& pl = parent(s, 0);
    auto& pt = parent(s, 1);
    const T w = s.grad[0] / static_cast<T>(n);
    if (pl.requires_grad) {
      auto& g = pl.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        T x = pl.value[i];
        T sig = x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
        g[i] += w * (sig - pt.value[i]);
      }
    }
    if (pt.requires_grad) {
      auto& g = pt.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= w * pl.value[i];
    }
  });
}

template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int batch,
                               int heads, T scale_factor,
                               std::shared_ptr<const AttentionWeights<T>>* weights_out) {
  require_rank2(q.shape(), "multi_head_attention");
  require_rank2(k.shape(), "multi_head_attention");
  require_rank2(v.shape(), "multi_head_attention");
  if (batch <= 0 || heads <= 0) throw ShapeError("multi_head_attention: batch and heads must be positive");
  if (q.shape() != k.shape() || v.rows() != q.rows() || q.rows() % batch != 0) {
    throw ShapeError("multi_head_attention: incompatible q/k/v shapes " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const int dk = q.cols(), dv = v.cols();
  if (dk % heads != 0 || dv % heads != 0) {
    throw ShapeError("multi_head_attention: widths must divide by head count");
  }
  const int R = q.rows() / batch;
  const int hk = dk / heads, hv = dv / heads;

  auto weights = std::make_shared<AttentionWeights<T>>();
  weights->batch = batch;
  weights->heads = heads;
  weights->tokens = R;
  weights->probs.assign(static_cast<std::size_t>(batch) * heads * R * R, T{0});
  Buffer<T> y(static_cast<std::size_t>(q.rows()) * dv);

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t row0 = static_cast<std::size_t>(b) * R;
      ConstStrided<T> qm(q.data().data() + row0 * dk + h * hk, R, hk, Eigen::OuterStride<>(dk));
      ConstStrided<T> km(k.data().data() + row0 * dk + h * hk, R, hk, Eigen::OuterStride<>(dk));
      ConstStrided<T> vm(v.data().data() + row0 * dv + h * hv, R, hv, Eigen::OuterStride<>(dv));
      MutMap<T> p(weights->probs.data() + (static_cast<std::size_t>(b) * heads + h) * R * R, R, R);
      p.noalias() = (qm * km.transpose()) * scale_factor;
      for (int i = 0; i < R; ++i) {
        T mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      MutStrided<T> om(y.data() + row0 * dv + h * hv, R, hv, Eigen::OuterStride<>(dv));
      om.noalias() = p * vm;
    }
  }
  if (weights_out) *weights_out = weights;

  return make_result<T>(
      {q.rows(), dv}, std::move(y), {q.node_ptr(), k.node_ptr(), v.node_ptr()},
      [weights, batch, heads, R, dk, dv, hk, hv, scale_factor](Node<T>& s) {
        auto& pq = parent(s, 0);
        auto& pk = parent(s, 1);
        auto& pv = parent(s, 2);
        RowMat<T> dp(R, R);
        for (int b = 0; b < batch; ++b) {
          for (int h = 0; h < heads; ++h) {
            const std::size_t row0 = static_cast<std::size_t>(b) * R;
            ConstMap<T> p(weights->probs.data() + (static_cast<std::size_t>(b) * heads + h) * R * R, R, R);
            ConstStrided<T> dout(s.grad.data() + row0 * dv + h * hv, R, hv, Eigen::OuterStride<>(dv));
            ConstStrided<T> vm(pv.value.data() + row0 * dv + h * hv, R, hv, Eigen::OuterStride<>(dv));
            if (pv.requires_grad) {
              MutStrided<T> dvm(pv.grad_buffer().data() + row0 * dv + h * hv, R, hv, Eigen::OuterStride<>(dv));
              dvm.noalias() += p.transpose() * dout;
            }
            if (!pq.requires_grad && !pk.requires_grad) continue;
            dp.noalias() = dout * vm.transpose();
            for (int i = 0; i < R; ++i) {
              T dot = (dp.row(i).array() * p.row(i).array()).sum();
              dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)) * scale_factor;
            }
            ConstStrided<T> qm(pq.value.data() + row0 * dk + h * hk, R, hk, Eigen::OuterStride<>(dk));
            ConstStrided<T> km(pk.value.data() + row0 * dk + h * hk, R, hk, Eigen::OuterStride<>(dk));
            if (pq.requires_grad) {
              MutStrided<T> dq(pq.grad_buffer().data() + row0 * dk + h * hk, R, hk, Eigen::OuterStride<>(dk));
              dq.noalias() += dp * km;
            }
            if (pk.requires_grad) {
              MutStrided<T> dkm(pk.grad_buffer().data() + row0 * dk + h * hk, R, hk, Eigen::OuterStride<>(dk));
              dkm.noalias() += dp.transpose() * qm;
            }
          }
        }
      });
}

#define VTT_INSTANTIATE_OPS(T)                                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> minimum(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> add_tiled(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                                    \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                               \
  template Tensor<T> square(const Tensor<T>&);                                                      \
  template Tensor<T> exp(const Tensor<T>&);                                                         \
  template Tensor<T> softplus(const Tensor<T>&);                                                    \
  template Tensor<T> log(const Tensor<T>&);                                                         \
  template Tensor<T> reciprocal(const Tensor<T>&);                                                  \
  template Tensor<T> tanh(const Tensor<T>&);                                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                        \
  template Tensor<T> gelu(const Tensor<T>&);                                                        \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sum(const Tensor<T>&);                                                         \
  template Tensor<T> mean(const Tensor<T>&);                                                        \
  template Tensor<T> row_sum(const Tensor<T>&);                                                     \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> slice_cols(const Tensor<T>&, int, int);                                        \
  template Tensor<T> slice_rows(const Tensor<T>&, int, int);                                        \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<int>&);                        \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                                          int, T, std::shared_ptr<const AttentionWeights<T>>*);

VTT_INSTANTIATE_OPS(float)
VTT_INSTANTIATE_OPS(double)

}  // namespace vtt

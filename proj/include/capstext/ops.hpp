#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <vector>

#include "capstext/tensor.hpp"

namespace capstext {

// Norm-bounding nonlinearity variants. `none` is the identity and only used
// in ablation runs.
enum class SquashKind { ratio, exp, tanh, none };

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::initializer_list<Tensor<T>> inputs) {
  size_t n = shape_numel(shape);
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value.assign(n, T(0));
  for (const auto& in : inputs) {
    node->inputs.push_back(in.node());
    node->requires_grad = node->requires_grad || in.requires_grad();
  }
  return Tensor<T>(std::move(node));
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
inline void axis_split(const Shape& shape, size_t axis, size_t& outer, size_t& n, size_t& inner) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  outer = 1;
  inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= shape[i];
  n = shape[axis];
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

inline Shape drop_axis(const Shape& shape, size_t axis) {
  if (shape.size() == 1) return Shape{1};
  Shape out;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and arithmetic primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = detail::make_op<T>(a.shape(), {a, b});
  auto* o = out.node().get();
  auto* an = a.node().get();
  auto* bn = b.node().get();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = an->value[i] + bn->value[i];
  if (o->requires_grad) {
    o->backprop = [o, an, bn] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i];
      }
    };
  }
  return out;
}

// Adds `bias` to every leading slice of `x`; bias shape must equal the
// trailing extents of x (strictly lower rank, matched explicitly so that a
// coincidental extent match can never flip the broadcast direction).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& bs = bias.shape();
  bool suffix = bs.size() < xs.size() &&
                std::equal(bs.begin(), bs.end(), xs.end() - static_cast<ptrdiff_t>(bs.size()));
  if (!suffix) {
    throw ShapeError("add_bias: bias " + shape_str(bs) + " is not a trailing block of " + shape_str(xs));
  }
  Tensor<T> out = detail::make_op<T>(xs, {x, bias});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  auto* bn = bias.node().get();
  size_t block = bias.numel();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = xn->value[i] + bn->value[i % block];
  if (o->requires_grad) {
    o->backprop = [o, xn, bn, block] {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i % block] += o->grad[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out = detail::make_op<T>(x.shape(), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = factor * xn->value[i];
  if (o->requires_grad) {
    o->backprop = [o, xn, factor] {
      xn->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += factor * o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = detail::make_op<T>(a.shape(), {a, b});
  auto* o = out.node().get();
  auto* an = a.node().get();
  auto* bn = b.node().get();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = an->value[i] * bn->value[i];
  if (o->requires_grad) {
    o->backprop = [o, an, bn] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i] * an->value[i];
      }
    };
  }
  return out;
}

// Multiplies each trailing block of `a` by the matching entry of `b`; b's
// shape must equal the leading extents of a (strictly lower rank).
template <typename T>
Tensor<T> mul_leading(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  bool prefix = bs.size() < as.size() && std::equal(bs.begin(), bs.end(), as.begin());
  if (!prefix) {
    throw ShapeError("mul_leading: " + shape_str(bs) + " is not a leading block of " + shape_str(as));
  }
  Tensor<T> out = detail::make_op<T>(as, {a, b});
  auto* o = out.node().get();
  auto* an = a.node().get();
  auto* bn = b.node().get();
  size_t block = a.numel() / b.numel();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = an->value[i] * bn->value[i / block];
  if (o->requires_grad) {
    o->backprop = [o, an, bn, block] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->value[i / block];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) bn->grad[i / block] += o->grad[i] * an->value[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = detail::make_op<T>(x.shape(), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = xn->value[i] > T(0) ? xn->value[i] : T(0);
  if (o->requires_grad) {
    o->backprop = [o, xn] {
      xn->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) {
        if (xn->value[i] > T(0)) xn->grad[i] += o->grad[i];
      }
    };
  }
  return out;
}

// Natural log; inputs must be strictly positive.
template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.values()) {
    if (!(v > T(0))) throw ContractError("log: non-positive input element");
  }
  Tensor<T> out = detail::make_op<T>(x.shape(), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t i = 0; i < o->value.size(); ++i) o->value[i] = std::log(xn->value[i]);
  if (o->requires_grad) {
    o->backprop = [o, xn] {
      xn->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i] / xn->value[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra and convolution
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> out = detail::make_op<T>({m, n}, {a, b});
  auto* o = out.node().get();
  auto* an = a.node().get();
  auto* bn = b.node().get();
  for (size_t i = 0; i < m; ++i) {
    for (size_t kk = 0; kk < k; ++kk) {
      T aik = an->value[i * k + kk];
      if (aik == T(0)) continue;
      const T* brow = &bn->value[kk * n];
      T* orow = &o->value[i * n];
      for (size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, an, bn, m, k, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < m; ++i) {
          for (size_t kk = 0; kk < k; ++kk) {
            T acc = T(0);
            const T* grow = &o->grad[i * n];
            const T* brow = &bn->value[kk * n];
            for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + kk] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < m; ++i) {
          for (size_t kk = 0; kk < k; ++kk) {
            T aik = an->value[i * k + kk];
            if (aik == T(0)) continue;
            const T* grow = &o->grad[i * n];
            T* brow = &bn->grad[kk * n];
            for (size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
          }
        }
      }
    };
  }
  return out;
}

// Valid 1-d convolution with stride 1 over the first axis. Input is [L, V],
// the filter bank [B, K, V]; output [L-K+1, B] where entry (p, b) is the full
// inner product of window p with filter b.
template <typename T>
Tensor<T> conv1d_valid(const Tensor<T>& x, const Tensor<T>& filters) {
  if (x.rank() != 2 || filters.rank() != 3 || filters.extent(2) != x.extent(1)) {
    throw ShapeError("conv1d_valid: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(filters.shape()));
  }
  size_t len = x.extent(0), width = x.extent(1);
  size_t banks = filters.extent(0), window = filters.extent(1);
  if (len < window) {
    throw ShapeError("conv1d_valid: input length " + std::to_string(len) +
                     " shorter than kernel " + std::to_string(window));
  }
  size_t positions = len - window + 1;
  Tensor<T> out = detail::make_op<T>({positions, banks}, {x, filters});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  auto* fn = filters.node().get();
  for (size_t p = 0; p < positions; ++p) {
    const T* win = &xn->value[p * width];
    for (size_t b = 0; b < banks; ++b) {
      const T* filt = &fn->value[b * window * width];
      T acc = T(0);
      for (size_t i = 0; i < window * width; ++i) acc += win[i] * filt[i];
      o->value[p * banks + b] = acc;
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, xn, fn, positions, banks, window, width] {
      if (xn->requires_grad) xn->ensure_grad();
      if (fn->requires_grad) fn->ensure_grad();
      for (size_t p = 0; p < positions; ++p) {
        for (size_t b = 0; b < banks; ++b) {
          T g = o->grad[p * banks + b];
          if (g == T(0)) continue;
          const T* filt = &fn->value[b * window * width];
          const T* win = &xn->value[p * width];
          if (xn->requires_grad) {
            T* gwin = &xn->grad[p * width];
            for (size_t i = 0; i < window * width; ++i) gwin[i] += g * filt[i];
          }
          if (fn->requires_grad) {
            T* gfilt = &fn->grad[b * window * width];
            for (size_t i = 0; i < window * width; ++i) gfilt[i] += g * win[i];
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x, size_t axis) {
  size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  Tensor<T> out = detail::make_op<T>(detail::drop_axis(x.shape(), axis), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t oi = 0; oi < outer; ++oi) {
    for (size_t k = 0; k < n; ++k) {
      const T* src = &xn->value[(oi * n + k) * inner];
      T* dst = &o->value[oi * inner];
      for (size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, xn, outer, n, inner] {
      xn->ensure_grad();
      for (size_t oi = 0; oi < outer; ++oi) {
        for (size_t k = 0; k < n; ++k) {
          T* dst = &xn->grad[(oi * n + k) * inner];
          const T* src = &o->grad[oi * inner];
          for (size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, size_t axis) {
  size_t n = x.shape().at(axis);
  return scale(sum(x, axis), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  Tensor<T> out = detail::make_op<T>({1}, {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  T acc = T(0);
  for (T v : xn->value) acc += v;
  o->value[0] = acc;
  if (o->requires_grad) {
    o->backprop = [o, xn] {
      xn->ensure_grad();
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += o->grad[0];
    };
  }
  return out;
}

// Euclidean norm along one axis; the zero lane maps to norm 0 with zero
// gradient (subgradient choice).
template <typename T>
Tensor<T> l2_norm(const Tensor<T>& x, size_t axis) {
  size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  Tensor<T> out = detail::make_op<T>(detail::drop_axis(x.shape(), axis), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t oi = 0; oi < outer; ++oi) {
    for (size_t i = 0; i < inner; ++i) {
      T acc = T(0);
      for (size_t k = 0; k < n; ++k) {
        T v = xn->value[(oi * n + k) * inner + i];
        acc += v * v;
      }
      o->value[oi * inner + i] = std::sqrt(acc);
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, xn, outer, n, inner] {
      xn->ensure_grad();
      for (size_t oi = 0; oi < outer; ++oi) {
        for (size_t i = 0; i < inner; ++i) {
          T norm = o->value[oi * inner + i];
          if (norm == T(0)) continue;
          T g = o->grad[oi * inner + i] / norm;
          for (size_t k = 0; k < n; ++k) {
            size_t idx = (oi * n + k) * inner + i;
            xn->grad[idx] += g * xn->value[idx];
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out = detail::make_op<T>(std::move(shape), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  o->value = xn->value;
  if (o->requires_grad) {
    o->backprop = [o, xn] {
      xn->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
    };
  }
  return out;
}

// Contiguous row range [from, to) along axis 0.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, size_t from, size_t to) {
  if (from >= to || to > x.extent(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(from) + ", " + std::to_string(to) +
                     ") invalid for shape " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[0] = to - from;
  size_t block = x.numel() / x.extent(0);
  Tensor<T> out = detail::make_op<T>(std::move(shape), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  std::copy_n(xn->value.begin() + static_cast<ptrdiff_t>(from * block), o->value.size(),
              o->value.begin());
  if (o->requires_grad) {
    o->backprop = [o, xn, from, block] {
      xn->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) xn->grad[from * block + i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    }
    for (size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) {
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + ": " +
                         shape_str(first) + " vs " + shape_str(p.shape()));
      }
    }
    total += p.shape().at(axis);
  }
  Shape shape = first;
  shape[axis] = total;

  auto node = std::make_shared<TensorNode<T>>();
  node->shape = shape;
  node->value.assign(shape_numel(shape), T(0));
  for (const auto& p : parts) {
    node->inputs.push_back(p.node());
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  Tensor<T> out(node);
  auto* o = out.node().get();

  size_t outer, n_out, inner;
  detail::axis_split(shape, axis, outer, n_out, inner);
  size_t offset = 0;
  for (const auto& p : parts) {
    size_t n_p = p.shape()[axis];
    const auto& src = p.node()->value;
    for (size_t oi = 0; oi < outer; ++oi) {
      std::copy_n(src.begin() + static_cast<ptrdiff_t>(oi * n_p * inner), n_p * inner,
                  o->value.begin() + static_cast<ptrdiff_t>((oi * n_out + offset) * inner));
    }
    offset += n_p;
  }
  if (o->requires_grad) {
    o->backprop = [o, axis, outer, n_out, inner] {
      size_t off = 0;
      for (auto& in : o->inputs) {
        size_t n_p = in->shape[axis];
        if (in->requires_grad) {
          in->ensure_grad();
          for (size_t oi = 0; oi < outer; ++oi) {
            const T* src = &o->grad[(oi * n_out + off) * inner];
            T* dst = &in->grad[oi * n_p * inner];
            for (size_t i = 0; i < n_p * inner; ++i) dst[i] += src[i];
          }
        }
        off += n_p;
      }
    };
  }
  return out;
}

// Row gather from a lookup table: out[i, :] = table[indices[i], :].
template <typename T>
Tensor<T> embed_rows(const Tensor<T>& table, const std::vector<size_t>& indices) {
  if (table.rank() != 2) throw ShapeError("embed_rows: table must be rank 2, got " + shape_str(table.shape()));
  if (indices.empty()) throw ContractError("embed_rows: empty index list");
  size_t rows = table.extent(0), width = table.extent(1);
  for (size_t idx : indices) {
    if (idx >= rows) {
      throw ContractError("embed_rows: index " + std::to_string(idx) + " out of range [0, " +
                          std::to_string(rows) + ")");
    }
  }
  Tensor<T> out = detail::make_op<T>({indices.size(), width}, {table});
  auto* o = out.node().get();
  auto* tn = table.node().get();
  for (size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(tn->value.begin() + static_cast<ptrdiff_t>(indices[i] * width), width,
                o->value.begin() + static_cast<ptrdiff_t>(i * width));
  }
  if (o->requires_grad) {
    auto idx = indices;
    o->backprop = [o, tn, idx = std::move(idx), width] {
      tn->ensure_grad();
      for (size_t i = 0; i < idx.size(); ++i) {
        const T* src = &o->grad[i * width];
        T* dst = &tn->grad[idx[i] * width];
        for (size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

namespace detail {

// Shared backward for softmax-like maps where dy_i/dx_k = y_i (d_ik - y_k).
template <typename T>
void softmax_backward(TensorNode<T>* o, TensorNode<T>* xn, size_t outer, size_t n, size_t inner) {
  xn->ensure_grad();
  for (size_t oi = 0; oi < outer; ++oi) {
    for (size_t i = 0; i < inner; ++i) {
      T dot = T(0);
      for (size_t k = 0; k < n; ++k) {
        size_t idx = (oi * n + k) * inner + i;
        dot += o->grad[idx] * o->value[idx];
      }
      for (size_t k = 0; k < n; ++k) {
        size_t idx = (oi * n + k) * inner + i;
        xn->grad[idx] += o->value[idx] * (o->grad[idx] - dot);
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, size_t axis) {
  size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  Tensor<T> out = detail::make_op<T>(x.shape(), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t oi = 0; oi < outer; ++oi) {
    for (size_t i = 0; i < inner; ++i) {
      T m = xn->value[(oi * n) * inner + i];
      for (size_t k = 1; k < n; ++k) m = std::max(m, xn->value[(oi * n + k) * inner + i]);
      T denom = T(0);
      for (size_t k = 0; k < n; ++k) {
        size_t idx = (oi * n + k) * inner + i;
        o->value[idx] = std::exp(xn->value[idx] - m);
        denom += o->value[idx];
      }
      for (size_t k = 0; k < n; ++k) o->value[(oi * n + k) * inner + i] /= denom;
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, xn, outer, n, inner] { detail::softmax_backward(o, xn, outer, n, inner); };
  }
  return out;
}

// Softmax with one extra implicit zero logit whose probability mass is
// discarded, so each lane sums to strictly less than one.
template <typename T>
Tensor<T> leaky_softmax(const Tensor<T>& x, size_t axis) {
  size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  Tensor<T> out = detail::make_op<T>(x.shape(), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t oi = 0; oi < outer; ++oi) {
    for (size_t i = 0; i < inner; ++i) {
      T m = T(0);  // leak logit participates in the max
      for (size_t k = 0; k < n; ++k) m = std::max(m, xn->value[(oi * n + k) * inner + i]);
      T denom = std::exp(-m);
      for (size_t k = 0; k < n; ++k) {
        size_t idx = (oi * n + k) * inner + i;
        o->value[idx] = std::exp(xn->value[idx] - m);
        denom += o->value[idx];
      }
      for (size_t k = 0; k < n; ++k) o->value[(oi * n + k) * inner + i] /= denom;
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, xn, outer, n, inner] { detail::softmax_backward(o, xn, outer, n, inner); };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Squash
// ---------------------------------------------------------------------------

namespace detail {

// Scale factor f(n) with y = f(|s|) * s, and its derivative. The kinds differ
// only in the norm-to-norm map k(n) = n * f(n).
template <typename T>
void squash_factor(SquashKind kind, T n, T& f, T& df) {
  switch (kind) {
    case SquashKind::ratio: {
      T denom = T(1) + n;
      f = T(1) / denom;
      df = -T(1) / (denom * denom);
      break;
    }
    case SquashKind::exp: {
      // f = (1 - e^-n)/n, stable via expm1 for small n.
      f = static_cast<T>(-std::expm1(static_cast<double>(-n))) / n;
      df = (n * std::exp(-n) + static_cast<T>(std::expm1(static_cast<double>(-n)))) / (n * n);
      break;
    }
    case SquashKind::tanh: {
      T th = std::tanh(n);
      f = th / n;
      df = ((T(1) - th * th) * n - th) / (n * n);
      break;
    }
    case SquashKind::none:
      f = T(1);
      df = T(0);
      break;
  }
}

}  // namespace detail

// Norm-bounding nonlinearity applied to each vector lane along `axis`:
// output = k(|s|) * s / |s|. The zero vector maps to itself; the gradient
// there uses the limiting Jacobian (identity for all kinds).
template <typename T>
Tensor<T> squash(const Tensor<T>& x, size_t axis, SquashKind kind) {
  size_t outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  Tensor<T> out = detail::make_op<T>(x.shape(), {x});
  auto* o = out.node().get();
  auto* xn = x.node().get();
  for (size_t oi = 0; oi < outer; ++oi) {
    for (size_t i = 0; i < inner; ++i) {
      T normsq = T(0);
      for (size_t k = 0; k < n; ++k) {
        T v = xn->value[(oi * n + k) * inner + i];
        normsq += v * v;
      }
      if (normsq == T(0)) continue;  // zero lane stays zero
      T norm = std::sqrt(normsq);
      T f, df;
      detail::squash_factor(kind, norm, f, df);
      for (size_t k = 0; k < n; ++k) {
        size_t idx = (oi * n + k) * inner + i;
        o->value[idx] = f * xn->value[idx];
      }
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, xn, kind, outer, n, inner] {
      xn->ensure_grad();
      for (size_t oi = 0; oi < outer; ++oi) {
        for (size_t i = 0; i < inner; ++i) {
          T normsq = T(0), dot = T(0);
          for (size_t k = 0; k < n; ++k) {
            size_t idx = (oi * n + k) * inner + i;
            normsq += xn->value[idx] * xn->value[idx];
            dot += o->grad[idx] * xn->value[idx];
          }
          if (normsq == T(0)) {
            // limiting Jacobian at the origin is the identity
            for (size_t k = 0; k < n; ++k) {
              size_t idx = (oi * n + k) * inner + i;
              xn->grad[idx] += o->grad[idx];
            }
            continue;
          }
          T norm = std::sqrt(normsq);
          T f, df;
          detail::squash_factor(kind, norm, f, df);
          T radial = df / norm * dot;
          for (size_t k = 0; k < n; ++k) {
            size_t idx = (oi * n + k) * inner + i;
            xn->grad[idx] += f * o->grad[idx] + radial * xn->value[idx];
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Capsule-specific contractions
// ---------------------------------------------------------------------------

// Child-to-parent predictions: votes[i, j, :] = W_j u_i + bias_j with weights
// [N, d, d] shared over children, or W_{i,j} u_i + bias_j with non-shared
// weights [H, N, d, d]. Children are [H, d], bias [N, d], output [H, N, d].
template <typename T>
Tensor<T> capsule_transform(const Tensor<T>& children, const Tensor<T>& weights,
                            const Tensor<T>& bias) {
  if (children.rank() != 2) {
    throw ShapeError("capsule_transform: children must be [H, d], got " + shape_str(children.shape()));
  }
  size_t count = children.extent(0), dim = children.extent(1);
  bool shared;
  size_t parents;
  if (weights.rank() == 3) {
    shared = true;
    parents = weights.extent(0);
    if (weights.extent(1) != dim || weights.extent(2) != dim) {
      throw ShapeError("capsule_transform: shared weights " + shape_str(weights.shape()) +
                       " incompatible with capsule dim " + std::to_string(dim));
    }
  } else if (weights.rank() == 4) {
    shared = false;
    parents = weights.extent(1);
    if (weights.extent(0) != count) {
      throw ShapeError("capsule_transform: non-shared weights expect " +
                       std::to_string(weights.extent(0)) + " children, got " + std::to_string(count));
    }
    if (weights.extent(2) != dim || weights.extent(3) != dim) {
      throw ShapeError("capsule_transform: non-shared weights " + shape_str(weights.shape()) +
                       " incompatible with capsule dim " + std::to_string(dim));
    }
  } else {
    throw ShapeError("capsule_transform: weights must be rank 3 or 4, got " + shape_str(weights.shape()));
  }
  if (bias.rank() != 2 || bias.extent(0) != parents || bias.extent(1) != dim) {
    throw ShapeError("capsule_transform: bias " + shape_str(bias.shape()) + " must be [" +
                     std::to_string(parents) + ", " + std::to_string(dim) + "]");
  }

  Tensor<T> out = detail::make_op<T>({count, parents, dim}, {children, weights, bias});
  auto* o = out.node().get();
  auto* un = children.node().get();
  auto* wn = weights.node().get();
  auto* bn = bias.node().get();
  for (size_t i = 0; i < count; ++i) {
    const T* u = &un->value[i * dim];
    for (size_t j = 0; j < parents; ++j) {
      const T* w = shared ? &wn->value[j * dim * dim] : &wn->value[(i * parents + j) * dim * dim];
      const T* bj = &bn->value[j * dim];
      T* v = &o->value[(i * parents + j) * dim];
      for (size_t a = 0; a < dim; ++a) {
        T acc = bj[a];
        const T* wrow = &w[a * dim];
        for (size_t b = 0; b < dim; ++b) acc += wrow[b] * u[b];
        v[a] = acc;
      }
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, un, wn, bn, shared, count, parents, dim] {
      if (un->requires_grad) un->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      for (size_t i = 0; i < count; ++i) {
        const T* u = &un->value[i * dim];
        T* gu = un->requires_grad ? &un->grad[i * dim] : nullptr;
        for (size_t j = 0; j < parents; ++j) {
          size_t woff = shared ? j * dim * dim : (i * parents + j) * dim * dim;
          const T* g = &o->grad[(i * parents + j) * dim];
          for (size_t a = 0; a < dim; ++a) {
            T ga = g[a];
            if (ga == T(0)) continue;
            if (bn->requires_grad) bn->grad[j * dim + a] += ga;
            const T* wrow = &wn->value[woff + a * dim];
            T* gwrow = wn->requires_grad ? &wn->grad[woff + a * dim] : nullptr;
            for (size_t b = 0; b < dim; ++b) {
              if (gwrow) gwrow[b] += ga * u[b];
              if (gu) gu[b] += ga * wrow[b];
            }
          }
        }
      }
    };
  }
  return out;
}

// Coupled sum over children: out[j, :] = sum_i coeff[i, j] * votes[i, j, :].
template <typename T>
Tensor<T> weighted_sum_children(const Tensor<T>& votes, const Tensor<T>& coeff) {
  if (votes.rank() != 3 || coeff.rank() != 2 || votes.extent(0) != coeff.extent(0) ||
      votes.extent(1) != coeff.extent(1)) {
    throw ShapeError("weighted_sum_children: shapes " + shape_str(votes.shape()) + " and " +
                     shape_str(coeff.shape()) + " do not align");
  }
  size_t count = votes.extent(0), parents = votes.extent(1), dim = votes.extent(2);
  Tensor<T> out = detail::make_op<T>({parents, dim}, {votes, coeff});
  auto* o = out.node().get();
  auto* vn = votes.node().get();
  auto* cn = coeff.node().get();
  for (size_t i = 0; i < count; ++i) {
    for (size_t j = 0; j < parents; ++j) {
      T c = cn->value[i * parents + j];
      if (c == T(0)) continue;
      const T* v = &vn->value[(i * parents + j) * dim];
      T* dst = &o->value[j * dim];
      for (size_t a = 0; a < dim; ++a) dst[a] += c * v[a];
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, vn, cn, count, parents, dim] {
      if (vn->requires_grad) vn->ensure_grad();
      if (cn->requires_grad) cn->ensure_grad();
      for (size_t i = 0; i < count; ++i) {
        for (size_t j = 0; j < parents; ++j) {
          const T* g = &o->grad[j * dim];
          const T* v = &vn->value[(i * parents + j) * dim];
          T c = cn->value[i * parents + j];
          if (vn->requires_grad) {
            T* gv = &vn->grad[(i * parents + j) * dim];
            for (size_t a = 0; a < dim; ++a) gv[a] += c * g[a];
          }
          if (cn->requires_grad) {
            T acc = T(0);
            for (size_t a = 0; a < dim; ++a) acc += v[a] * g[a];
            cn->grad[i * parents + j] += acc;
          }
        }
      }
    };
  }
  return out;
}

// Per-pair inner products: out[i, j] = votes[i, j, :] . parents[j, :].
template <typename T>
Tensor<T> parent_agreement(const Tensor<T>& votes, const Tensor<T>& parents_t) {
  if (votes.rank() != 3 || parents_t.rank() != 2 || votes.extent(1) != parents_t.extent(0) ||
      votes.extent(2) != parents_t.extent(1)) {
    throw ShapeError("parent_agreement: shapes " + shape_str(votes.shape()) + " and " +
                     shape_str(parents_t.shape()) + " do not align");
  }
  size_t count = votes.extent(0), parents = votes.extent(1), dim = votes.extent(2);
  Tensor<T> out = detail::make_op<T>({count, parents}, {votes, parents_t});
  auto* o = out.node().get();
  auto* vn = votes.node().get();
  auto* pn = parents_t.node().get();
  for (size_t i = 0; i < count; ++i) {
    for (size_t j = 0; j < parents; ++j) {
      const T* v = &vn->value[(i * parents + j) * dim];
      const T* p = &pn->value[j * dim];
      T acc = T(0);
      for (size_t a = 0; a < dim; ++a) acc += v[a] * p[a];
      o->value[i * parents + j] = acc;
    }
  }
  if (o->requires_grad) {
    o->backprop = [o, vn, pn, count, parents, dim] {
      if (vn->requires_grad) vn->ensure_grad();
      if (pn->requires_grad) pn->ensure_grad();
      for (size_t i = 0; i < count; ++i) {
        for (size_t j = 0; j < parents; ++j) {
          T g = o->grad[i * parents + j];
          if (g == T(0)) continue;
          const T* v = &vn->value[(i * parents + j) * dim];
          const T* p = &pn->value[j * dim];
          if (vn->requires_grad) {
            T* gv = &vn->grad[(i * parents + j) * dim];
            for (size_t a = 0; a < dim; ++a) gv[a] += g * p[a];
          }
          if (pn->requires_grad) {
            T* gp = &pn->grad[j * dim];
            for (size_t a = 0; a < dim; ++a) gp[a] += g * v[a];
          }
        }
      }
    };
  }
  return out;
}

}  // namespace capstext

#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "mipan/autograd.hpp"
#include "mipan/tensor.hpp"

namespace mipan {

enum class EwOp { add, sub, mul, silu, sigmoid, exp_fn, softplus };

namespace detail {

struct BcastPlan {
  Shape out;
  std::vector<std::size_t> sa, sb;  // effective strides, 0 on broadcast axes
  bool same = false;
};

inline BcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("elementwise: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  BcastPlan p;
  p.out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) p.out[i] = a[i];
    else if (a[i] == 1) p.out[i] = b[i];
    else if (b[i] == 1) p.out[i] = a[i];
    else
      throw std::invalid_argument("elementwise: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
  }
  p.same = (a == b);
  auto stra = row_major_strides(a), strb = row_major_strides(b);
  p.sa.resize(a.size());
  p.sb.resize(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    p.sa[i] = (a[i] == 1 && p.out[i] != 1) ? 0 : stra[i];
    p.sb[i] = (b[i] == 1 && p.out[i] != 1) ? 0 : strb[i];
  }
  return p;
}

template <typename F>
void broadcast_iterate(const Shape& out, const std::vector<std::size_t>& sa,
                       const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = out.size();
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offa = 0, offb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, offa, offb);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      offa += sa[ax];
      offb += sb[ax];
      if (idx[ax] < out[ax]) break;
      offa -= sa[ax] * out[ax];
      offb -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

template <typename T> inline T sigmoid_v(T x) { return T(1) / (T(1) + std::exp(-x)); }
template <typename T> inline T softplus_v(T x) {
  // stable: softplus(x) = x + softplus(-x) for large x
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace detail

// ---- binary elementwise with size-1 broadcasting ----

template <typename T>
NodePtr<T> binary_ew(EwOp op, const NodePtr<T>& a, const NodePtr<T>& b) {
  auto plan = detail::broadcast_plan(a->value.shape(), b->value.shape());
  Tensor<T> out(plan.out);
  const T* pa = a->value.data();
  const T* pb = b->value.data();
  T* po = out.data();
  auto apply = [op](T x, T y) {
    switch (op) {
      case EwOp::add: return x + y;
      case EwOp::sub: return x - y;
      case EwOp::mul: return x * y;
      default: throw std::invalid_argument("elementwise: op is not binary");
    }
  };
  if (plan.same) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = apply(pa[i], pb[i]);
  } else {
    detail::broadcast_iterate(plan.out, plan.sa, plan.sb,
                              [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = apply(pa[ia], pb[ib]); });
  }
  const char* name = op == EwOp::add ? "add" : op == EwOp::sub ? "sub" : "mul";
  require_finite(out, name);

  return make_op_node<T>(std::move(out), name, {a, b}, [op, plan](Node<T>& n) {
    const NodePtr<T>& a = n.parents[0];
    const NodePtr<T>& b = n.parents[1];
    const T* g = n.grad.data();
    const T* pa = a->value.data();
    const T* pb = b->value.data();
    T* ga = a->requires_grad ? a->ensure_grad().data() : nullptr;
    T* gb = b->requires_grad ? b->ensure_grad().data() : nullptr;
    auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
      switch (op) {
        case EwOp::add:
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] += g[i];
          break;
        case EwOp::sub:
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] -= g[i];
          break;
        case EwOp::mul:
          if (ga) ga[ia] += g[i] * pb[ib];
          if (gb) gb[ib] += g[i] * pa[ia];
          break;
        default: break;
      }
    };
    if (plan.same) {
      const std::size_t nels = n.value.size();
      for (std::size_t i = 0; i < nels; ++i) step(i, i, i);
    } else {
      detail::broadcast_iterate(plan.out, plan.sa, plan.sb, step);
    }
  });
}

template <typename T> NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) { return binary_ew(EwOp::add, a, b); }
template <typename T> NodePtr<T> sub(const NodePtr<T>& a, const NodePtr<T>& b) { return binary_ew(EwOp::sub, a, b); }
template <typename T> NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) { return binary_ew(EwOp::mul, a, b); }

// ---- unary elementwise ----

template <typename T>
NodePtr<T> unary_ew(EwOp op, const NodePtr<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  const std::size_t n = out.size();
  const char* name = "";
  switch (op) {
    case EwOp::silu:
      name = "silu";
      for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * detail::sigmoid_v(px[i]);
      break;
    case EwOp::sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < n; ++i) po[i] = detail::sigmoid_v(px[i]);
      break;
    case EwOp::exp_fn:
      name = "exp";
      for (std::size_t i = 0; i < n; ++i) po[i] = std::exp(px[i]);
      break;
    case EwOp::softplus:
      name = "softplus";
      for (std::size_t i = 0; i < n; ++i) po[i] = detail::softplus_v(px[i]);
      break;
    default: throw std::invalid_argument("elementwise: op is not unary");
  }
  require_finite(out, name);

  return make_op_node<T>(std::move(out), name, {x}, [op](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    if (!x->requires_grad) return;
    const T* px = x->value.data();
    const T* pv = n.value.data();
    const T* g = n.grad.data();
    T* gx = x->ensure_grad().data();
    const std::size_t nels = n.value.size();
    for (std::size_t i = 0; i < nels; ++i) {
      T d;
      switch (op) {
        case EwOp::silu: {
          T s = detail::sigmoid_v(px[i]);
          d = s * (T(1) + px[i] * (T(1) - s));
          break;
        }
        case EwOp::sigmoid: d = pv[i] * (T(1) - pv[i]); break;
        case EwOp::exp_fn: d = pv[i]; break;
        case EwOp::softplus: d = detail::sigmoid_v(px[i]); break;
        default: d = T(0); break;
      }
      gx[i] += g[i] * d;
    }
  });
}

template <typename T> NodePtr<T> silu(const NodePtr<T>& x) { return unary_ew(EwOp::silu, x); }
template <typename T> NodePtr<T> sigmoid(const NodePtr<T>& x) { return unary_ew(EwOp::sigmoid, x); }
template <typename T> NodePtr<T> exp_node(const NodePtr<T>& x) { return unary_ew(EwOp::exp_fn, x); }
template <typename T> NodePtr<T> softplus(const NodePtr<T>& x) { return unary_ew(EwOp::softplus, x); }

// Kind-dispatched spelling; b is ignored (and must be null) for unary kinds.
template <typename T>
NodePtr<T> elementwise(EwOp op, const NodePtr<T>& a, const NodePtr<T>& b = nullptr) {
  switch (op) {
    case EwOp::add:
    case EwOp::sub:
    case EwOp::mul:
      if (!b) throw std::invalid_argument("elementwise: binary op needs two operands");
      return binary_ew(op, a, b);
    default:
      if (b) throw std::invalid_argument("elementwise: unary op takes one operand");
      return unary_ew(op, a);
  }
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& x, T c) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = c * px[i];
  require_finite(out, "scale");
  return make_op_node<T>(std::move(out), "scale", {x}, [c](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    if (!x->requires_grad) return;
    const T* g = n.grad.data();
    T* gx = x->ensure_grad().data();
    for (std::size_t i = 0; i < n.value.size(); ++i) gx[i] += c * g[i];
  });
}

// ---- matmul on rank-2 operands ----

template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw std::invalid_argument("matmul: bad operand shapes " + shape_str(sa) + " x " + shape_str(sb));
  const std::size_t M = sa[0], K = sa[1], N = sb[1];
  Tensor<T> out({M, N});
  const T* pa = a->value.data();
  const T* pb = b->value.data();
  T* po = out.data();
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      const T av = pa[m * K + k];
      const T* brow = pb + k * N;
      T* orow = po + m * N;
      for (std::size_t nn = 0; nn < N; ++nn) orow[nn] += av * brow[nn];
    }
  require_finite(out, "matmul");

  return make_op_node<T>(std::move(out), "matmul", {a, b}, [M, K, N](Node<T>& n) {
    const NodePtr<T>& a = n.parents[0];
    const NodePtr<T>& b = n.parents[1];
    const T* g = n.grad.data();
    const T* pa = a->value.data();
    const T* pb = b->value.data();
    if (a->requires_grad) {
      T* ga = a->ensure_grad().data();
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t nn = 0; nn < N; ++nn) {
          const T gv = g[m * N + nn];
          for (std::size_t k = 0; k < K; ++k) ga[m * K + k] += gv * pb[k * N + nn];
        }
    }
    if (b->requires_grad) {
      T* gb = b->ensure_grad().data();
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < K; ++k) {
          const T av = pa[m * K + k];
          for (std::size_t nn = 0; nn < N; ++nn) gb[k * N + nn] += av * g[m * N + nn];
        }
    }
  });
}

// ---- axis gather / permutation / slicing / concat / reshape ----

namespace detail {
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  if (axis >= s.size()) throw std::invalid_argument("gather: axis out of range for " + shape_str(s));
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

// General gather along one axis; backward is scatter-add, so repeated
// indices are allowed.
template <typename T>
NodePtr<T> gather_axis(const NodePtr<T>& x, std::size_t axis, std::vector<std::int64_t> indices) {
  const Shape& sx = x->value.shape();
  std::size_t outer, inner;
  detail::axis_split(sx, axis, outer, inner);
  const std::size_t E = sx[axis];
  for (std::int64_t ix : indices)
    if (ix < 0 || static_cast<std::size_t>(ix) >= E)
      throw std::invalid_argument("gather: index out of range");
  Shape so = sx;
  so[axis] = indices.size();
  const std::size_t K = indices.size();
  Tensor<T> out(so);
  const T* px = x->value.data();
  T* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < K; ++k)
      std::memcpy(po + (o * K + k) * inner,
                  px + (o * E + static_cast<std::size_t>(indices[k])) * inner,
                  inner * sizeof(T));

  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(indices));
  return make_op_node<T>(std::move(out), "gather", {x}, [outer, inner, E, K, idx](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    if (!x->requires_grad) return;
    const T* g = n.grad.data();
    T* gx = x->ensure_grad().data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < K; ++k) {
        T* dst = gx + (o * E + static_cast<std::size_t>((*idx)[k])) * inner;
        const T* src = g + (o * K + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

// Gather restricted to a bijection on the axis: a pure reordering.
template <typename T>
NodePtr<T> permute_gather(const NodePtr<T>& x, std::size_t axis, const std::vector<std::int64_t>& map) {
  const Shape& sx = x->value.shape();
  if (axis >= sx.size()) throw std::invalid_argument("permute_gather: axis out of range");
  const std::size_t E = sx[axis];
  if (map.size() != E)
    throw std::invalid_argument("permute_gather: map length " + std::to_string(map.size()) +
                                " does not cover axis extent " + std::to_string(E));
  std::vector<char> seen(E, 0);
  for (std::int64_t ix : map) {
    if (ix < 0 || static_cast<std::size_t>(ix) >= E)
      throw std::invalid_argument("permute_gather: map entry out of range");
    if (seen[static_cast<std::size_t>(ix)])
      throw std::invalid_argument("permute_gather: map is not a bijection");
    seen[static_cast<std::size_t>(ix)] = 1;
  }
  return gather_axis(x, axis, map);
}

template <typename T>
NodePtr<T> slice_axis(const NodePtr<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& sx = x->value.shape();
  std::size_t outer, inner;
  detail::axis_split(sx, axis, outer, inner);
  const std::size_t E = sx[axis];
  if (len == 0 || start + len > E) throw std::invalid_argument("slice: range out of bounds");
  Shape so = sx;
  so[axis] = len;
  Tensor<T> out(so);
  const T* px = x->value.data();
  T* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(po + o * len * inner, px + (o * E + start) * inner, len * inner * sizeof(T));

  return make_op_node<T>(std::move(out), "slice", {x}, [outer, inner, E, start, len](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    if (!x->requires_grad) return;
    const T* g = n.grad.data();
    T* gx = x->ensure_grad().data();
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = gx + (o * E + start) * inner;
      const T* src = g + o * len * inner;
      for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
NodePtr<T> concat(const std::vector<NodePtr<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no operands");
  const Shape& s0 = xs[0]->value.shape();
  std::size_t outer, inner;
  detail::axis_split(s0, axis, outer, inner);
  std::size_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x->value.shape();
    if (s.size() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    total += s[axis];
  }
  Shape so = s0;
  so[axis] = total;
  Tensor<T> out(so);
  T* po = out.data();
  std::vector<std::size_t> extents;
  std::size_t off = 0;
  for (const auto& x : xs) {
    const std::size_t e = x->value.shape()[axis];
    extents.push_back(e);
    const T* px = x->value.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * total + off) * inner, px + o * e * inner, e * inner * sizeof(T));
    off += e;
  }

  return make_op_node<T>(std::move(out), "concat", xs, [outer, inner, total, extents](Node<T>& n) {
    const T* g = n.grad.data();
    std::size_t off = 0;
    for (std::size_t p = 0; p < n.parents.size(); ++p) {
      const std::size_t e = extents[p];
      const NodePtr<T>& x = n.parents[p];
      if (x->requires_grad) {
        T* gx = x->ensure_grad().data();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = g + (o * total + off) * inner;
          T* dst = gx + o * e * inner;
          for (std::size_t i = 0; i < e * inner; ++i) dst[i] += src[i];
        }
      }
      off += e;
    }
  });
}

template <typename T>
NodePtr<T> reshape(const NodePtr<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x->value.size())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(x->value.shape()) +
                                " -> " + shape_str(new_shape));
  Tensor<T> out = Tensor<T>::from(
      std::move(new_shape), std::vector<T>(x->value.data(), x->value.data() + x->value.size()));
  return make_op_node<T>(std::move(out), "reshape", {x}, [](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    if (!x->requires_grad) return;
    const T* g = n.grad.data();
    T* gx = x->ensure_grad().data();
    for (std::size_t i = 0; i < n.value.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
NodePtr<T> sum_all(const NodePtr<T>& x) {
  T acc = T(0);
  const T* px = x->value.data();
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += px[i];
  Tensor<T> out = Tensor<T>::from({1}, {acc});
  require_finite(out, "sum");
  return make_op_node<T>(std::move(out), "sum", {x}, [](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    if (!x->requires_grad) return;
    const T g = n.grad[0];
    T* gx = x->ensure_grad().data();
    for (std::size_t i = 0; i < x->value.size(); ++i) gx[i] += g;
  });
}

}  // namespace mipan

#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mipan/autograd.hpp"
#include "mipan/ops.hpp"
#include "mipan/tensor.hpp"

namespace mipan {

// ---- 2-D convolution (cross-correlation), grouped ----
//
// x: [B, Cin, H, W], w: [Cout, Cin/groups, kh, kw], bias: [Cout]
// out: [B, Cout, (H + 2*pad - kh)/stride + 1, (W + 2*pad - kw)/stride + 1]

namespace detail {

template <typename T>
void pad_plane(const T* src, std::size_t h, std::size_t w, std::size_t pad, T* dst) {
  const std::size_t wp = w + 2 * pad;
  const std::size_t hp = h + 2 * pad;
  std::memset(dst, 0, hp * wp * sizeof(T));
  for (std::size_t r = 0; r < h; ++r)
    std::memcpy(dst + (r + pad) * wp + pad, src + r * w, w * sizeof(T));
}

struct ConvDims {
  std::size_t B, Cin, H, W, Cout, kh, kw, stride, pad, groups;
  std::size_t cpg_in, cpg_out, Ho, Wo, Hp, Wp;
};

inline ConvDims conv_dims(const Shape& sx, const Shape& sw, const Shape& sb,
                          std::size_t stride, std::size_t pad, std::size_t groups) {
  if (sx.size() != 4) throw std::invalid_argument("conv2d: input must be rank 4, got " + shape_str(sx));
  if (sw.size() != 4) throw std::invalid_argument("conv2d: weight must be rank 4, got " + shape_str(sw));
  if (sb.size() != 1) throw std::invalid_argument("conv2d: bias must be rank 1");
  ConvDims d;
  d.B = sx[0]; d.Cin = sx[1]; d.H = sx[2]; d.W = sx[3];
  d.Cout = sw[0]; d.kh = sw[2]; d.kw = sw[3];
  d.stride = stride; d.pad = pad; d.groups = groups;
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (groups == 0 || d.Cin % groups || d.Cout % groups)
    throw std::invalid_argument("conv2d: groups must divide both channel counts");
  d.cpg_in = d.Cin / groups;
  d.cpg_out = d.Cout / groups;
  if (sw[1] != d.cpg_in)
    throw std::invalid_argument("conv2d: weight shape " + shape_str(sw) + " inconsistent with groups");
  if (sb[0] != d.Cout) throw std::invalid_argument("conv2d: bias length mismatch");
  if (d.H + 2 * pad < d.kh || d.W + 2 * pad < d.kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  d.Hp = d.H + 2 * pad;
  d.Wp = d.W + 2 * pad;
  return d;
}

}  // namespace detail

template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& bias,
                  std::size_t stride = 1, std::size_t pad = 0, std::size_t groups = 1) {
  using detail::ConvDims;
  const ConvDims d = detail::conv_dims(x->value.shape(), w->value.shape(), bias->value.shape(),
                                       stride, pad, groups);
  Tensor<T> out({d.B, d.Cout, d.Ho, d.Wo});
  const T* px = x->value.data();
  const T* pw = w->value.data();
  const T* pb = bias->value.data();
  T* po = out.data();

  std::vector<T> padded(d.Cin * d.Hp * d.Wp);
  for (std::size_t b = 0; b < d.B; ++b) {
    for (std::size_t c = 0; c < d.Cin; ++c)
      detail::pad_plane(px + (b * d.Cin + c) * d.H * d.W, d.H, d.W, d.pad,
                        padded.data() + c * d.Hp * d.Wp);
    for (std::size_t oc = 0; oc < d.Cout; ++oc) {
      T* oplane = po + (b * d.Cout + oc) * d.Ho * d.Wo;
      for (std::size_t i = 0; i < d.Ho * d.Wo; ++i) oplane[i] = pb[oc];
      const std::size_t g = oc / d.cpg_out;
      for (std::size_t icg = 0; icg < d.cpg_in; ++icg) {
        const T* xplane = padded.data() + (g * d.cpg_in + icg) * d.Hp * d.Wp;
        const T* wk = pw + ((oc * d.cpg_in + icg) * d.kh) * d.kw;
        for (std::size_t kh = 0; kh < d.kh; ++kh)
          for (std::size_t kw = 0; kw < d.kw; ++kw) {
            const T wv = wk[kh * d.kw + kw];
            for (std::size_t oh = 0; oh < d.Ho; ++oh) {
              const T* src = xplane + (oh * d.stride + kh) * d.Wp + kw;
              T* dst = oplane + oh * d.Wo;
              if (d.stride == 1) {
                for (std::size_t ow = 0; ow < d.Wo; ++ow) dst[ow] += wv * src[ow];
              } else {
                for (std::size_t ow = 0; ow < d.Wo; ++ow) dst[ow] += wv * src[ow * d.stride];
              }
            }
          }
      }
    }
  }
  require_finite(out, "conv2d");

  return make_op_node<T>(std::move(out), "conv2d", {x, w, bias}, [d](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    const NodePtr<T>& w = n.parents[1];
    const NodePtr<T>& bias = n.parents[2];
    const T* g = n.grad.data();
    const T* px = x->value.data();
    const T* pw = w->value.data();
    T* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
    T* gw = w->requires_grad ? w->ensure_grad().data() : nullptr;
    T* gb = bias->requires_grad ? bias->ensure_grad().data() : nullptr;

    if (gb) {
      for (std::size_t b = 0; b < d.B; ++b)
        for (std::size_t oc = 0; oc < d.Cout; ++oc) {
          const T* gplane = g + (b * d.Cout + oc) * d.Ho * d.Wo;
          T acc = T(0);
          for (std::size_t i = 0; i < d.Ho * d.Wo; ++i) acc += gplane[i];
          gb[oc] += acc;
        }
    }
    if (!gx && !gw) return;

    std::vector<T> padded(d.Cin * d.Hp * d.Wp);
    std::vector<T> gpad(gx ? d.Cin * d.Hp * d.Wp : 0);
    for (std::size_t b = 0; b < d.B; ++b) {
      for (std::size_t c = 0; c < d.Cin; ++c)
        detail::pad_plane(px + (b * d.Cin + c) * d.H * d.W, d.H, d.W, d.pad,
                          padded.data() + c * d.Hp * d.Wp);
      if (gx) std::fill(gpad.begin(), gpad.end(), T(0));
      for (std::size_t oc = 0; oc < d.Cout; ++oc) {
        const T* gplane = g + (b * d.Cout + oc) * d.Ho * d.Wo;
        const std::size_t grp = oc / d.cpg_out;
        for (std::size_t icg = 0; icg < d.cpg_in; ++icg) {
          const std::size_t ic = grp * d.cpg_in + icg;
          const T* xplane = padded.data() + ic * d.Hp * d.Wp;
          T* gxplane = gx ? gpad.data() + ic * d.Hp * d.Wp : nullptr;
          for (std::size_t kh = 0; kh < d.kh; ++kh)
            for (std::size_t kw = 0; kw < d.kw; ++kw) {
              const std::size_t widx = (oc * d.cpg_in + icg) * d.kh * d.kw + kh * d.kw + kw;
              const T wv = pw[widx];
              T wacc = T(0);
              for (std::size_t oh = 0; oh < d.Ho; ++oh) {
                const T* grow = gplane + oh * d.Wo;
                const std::size_t base = (oh * d.stride + kh) * d.Wp + kw;
                const T* srow = xplane + base;
                if (gw) {
                  if (d.stride == 1)
                    for (std::size_t ow = 0; ow < d.Wo; ++ow) wacc += grow[ow] * srow[ow];
                  else
                    for (std::size_t ow = 0; ow < d.Wo; ++ow) wacc += grow[ow] * srow[ow * d.stride];
                }
                if (gxplane) {
                  T* drow = gxplane + base;
                  if (d.stride == 1)
                    for (std::size_t ow = 0; ow < d.Wo; ++ow) drow[ow] += wv * grow[ow];
                  else
                    for (std::size_t ow = 0; ow < d.Wo; ++ow) drow[ow * d.stride] += wv * grow[ow];
                }
              }
              if (gw) gw[widx] += wacc;
            }
        }
      }
      if (gx) {
        for (std::size_t c = 0; c < d.Cin; ++c) {
          T* dst = gx + (b * d.Cin + c) * d.H * d.W;
          const T* src = gpad.data() + c * d.Hp * d.Wp;
          for (std::size_t r = 0; r < d.H; ++r)
            for (std::size_t col = 0; col < d.W; ++col)
              dst[r * d.W + col] += src[(r + d.pad) * d.Wp + (col + d.pad)];
        }
      }
    }
  });
}

// Depthwise 3x3-style conv: one filter per channel, same padding, stride 1.
template <typename T>
NodePtr<T> dwconv(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& bias) {
  const Shape& sx = x->value.shape();
  const Shape& sw = w->value.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != 1)
    throw std::invalid_argument("dwconv: expected x [B,C,H,W], w [C,1,k,k]");
  if (sw[0] != sx[1]) throw std::invalid_argument("dwconv: channel count mismatch");
  if (sw[2] != sw[3] || sw[2] % 2 == 0)
    throw std::invalid_argument("dwconv: kernel must be square and odd");
  return conv2d(x, w, bias, 1, sw[2] / 2, sx[1]);
}

// ---- layer norm over the channel axis (axis 1) ----

template <typename T>
NodePtr<T> layer_norm(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                      T eps = T(1e-5)) {
  const Shape& sx = x->value.shape();
  if (sx.size() < 2) throw std::invalid_argument("layer_norm: input must have a channel axis");
  const std::size_t B = sx[0], C = sx[1];
  std::size_t P = 1;
  for (std::size_t i = 2; i < sx.size(); ++i) P *= sx[i];
  if (gamma->value.size() != C || beta->value.size() != C)
    throw std::invalid_argument("layer_norm: affine params must have length C");

  Tensor<T> out(sx);
  auto mean = std::make_shared<std::vector<T>>(B * P, T(0));
  auto inv = std::make_shared<std::vector<T>>(B * P, T(0));
  const T* px = x->value.data();
  const T* pg = gamma->value.data();
  const T* pbta = beta->value.data();
  T* po = out.data();

  for (std::size_t b = 0; b < B; ++b) {
    T* mu = mean->data() + b * P;
    T* iv = inv->data() + b * P;
    const T* xb = px + b * C * P;
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xb + c * P;
      for (std::size_t p = 0; p < P; ++p) mu[p] += row[p];
    }
    for (std::size_t p = 0; p < P; ++p) mu[p] /= T(C);
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xb + c * P;
      for (std::size_t p = 0; p < P; ++p) {
        const T dd = row[p] - mu[p];
        iv[p] += dd * dd;
      }
    }
    for (std::size_t p = 0; p < P; ++p) iv[p] = T(1) / std::sqrt(iv[p] / T(C) + eps);
    T* ob = po + b * C * P;
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xb + c * P;
      T* orow = ob + c * P;
      const T gc = pg[c], bc = pbta[c];
      for (std::size_t p = 0; p < P; ++p) orow[p] = gc * (row[p] - mu[p]) * iv[p] + bc;
    }
  }
  require_finite(out, "layer_norm");

  return make_op_node<T>(std::move(out), "layer_norm", {x, gamma, beta},
                         [B, C, P, mean, inv](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    const NodePtr<T>& gamma = n.parents[1];
    const NodePtr<T>& beta = n.parents[2];
    const T* g = n.grad.data();
    const T* px = x->value.data();
    const T* pg = gamma->value.data();
    T* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
    T* gg = gamma->requires_grad ? gamma->ensure_grad().data() : nullptr;
    T* gb = beta->requires_grad ? beta->ensure_grad().data() : nullptr;

    std::vector<T> s1(P), s2(P);
    for (std::size_t b = 0; b < B; ++b) {
      const T* mu = mean->data() + b * P;
      const T* iv = inv->data() + b * P;
      const T* xb = px + b * C * P;
      const T* gbk = g + b * C * P;
      if (gg || gb) {
        for (std::size_t c = 0; c < C; ++c) {
          const T* grow = gbk + c * P;
          const T* xrow = xb + c * P;
          T a1 = T(0), a2 = T(0);
          for (std::size_t p = 0; p < P; ++p) {
            a1 += grow[p] * (xrow[p] - mu[p]) * iv[p];
            a2 += grow[p];
          }
          if (gg) gg[c] += a1;
          if (gb) gb[c] += a2;
        }
      }
      if (gx) {
        std::fill(s1.begin(), s1.end(), T(0));
        std::fill(s2.begin(), s2.end(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
          const T* grow = gbk + c * P;
          const T* xrow = xb + c * P;
          const T gc = pg[c];
          for (std::size_t p = 0; p < P; ++p) {
            const T dxh = grow[p] * gc;
            s1[p] += dxh;
            s2[p] += dxh * (xrow[p] - mu[p]) * iv[p];
          }
        }
        T* gxb = gx + b * C * P;
        for (std::size_t c = 0; c < C; ++c) {
          const T* grow = gbk + c * P;
          const T* xrow = xb + c * P;
          T* gxrow = gxb + c * P;
          const T gc = pg[c];
          for (std::size_t p = 0; p < P; ++p) {
            const T xh = (xrow[p] - mu[p]) * iv[p];
            const T dxh = grow[p] * gc;
            gxrow[p] += iv[p] * (dxh - s1[p] / T(C) - xh * s2[p] / T(C));
          }
        }
      }
    }
  });
}

// ---- pointwise linear over the channel axis ----
// x: [B, Cin, ...], w: [Cin, Cout], bias: [Cout] -> [B, Cout, ...]

template <typename T>
NodePtr<T> linear_channels(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& bias) {
  const Shape& sx = x->value.shape();
  const Shape& sw = w->value.shape();
  if (sx.size() < 2 || sw.size() != 2)
    throw std::invalid_argument("linear: expected x [B,Cin,...], w [Cin,Cout]");
  const std::size_t B = sx[0], Cin = sx[1], Cout = sw[1];
  if (sw[0] != Cin) throw std::invalid_argument("linear: weight rows must match input channels");
  if (bias->value.size() != Cout) throw std::invalid_argument("linear: bias length mismatch");
  std::size_t P = 1;
  for (std::size_t i = 2; i < sx.size(); ++i) P *= sx[i];

  Shape so = sx;
  so[1] = Cout;
  Tensor<T> out(so);
  const T* px = x->value.data();
  const T* pw = w->value.data();
  const T* pb = bias->value.data();
  T* po = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    T* ob = po + b * Cout * P;
    for (std::size_t co = 0; co < Cout; ++co) {
      T* orow = ob + co * P;
      for (std::size_t p = 0; p < P; ++p) orow[p] = pb[co];
    }
    const T* xb = px + b * Cin * P;
    for (std::size_t ci = 0; ci < Cin; ++ci) {
      const T* xrow = xb + ci * P;
      const T* wrow = pw + ci * Cout;
      for (std::size_t co = 0; co < Cout; ++co) {
        const T wv = wrow[co];
        T* orow = ob + co * P;
        for (std::size_t p = 0; p < P; ++p) orow[p] += wv * xrow[p];
      }
    }
  }
  require_finite(out, "linear");

  return make_op_node<T>(std::move(out), "linear", {x, w, bias}, [B, Cin, Cout, P](Node<T>& n) {
    const NodePtr<T>& x = n.parents[0];
    const NodePtr<T>& w = n.parents[1];
    const NodePtr<T>& bias = n.parents[2];
    const T* g = n.grad.data();
    const T* px = x->value.data();
    const T* pw = w->value.data();
    T* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
    T* gw = w->requires_grad ? w->ensure_grad().data() : nullptr;
    T* gb = bias->requires_grad ? bias->ensure_grad().data() : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
      const T* gbk = g + b * Cout * P;
      const T* xb = px + b * Cin * P;
      if (gb) {
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* grow = gbk + co * P;
          T acc = T(0);
          for (std::size_t p = 0; p < P; ++p) acc += grow[p];
          gb[co] += acc;
        }
      }
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* xrow = xb + ci * P;
        T* gxrow = gx ? gx + (b * Cin + ci) * P : nullptr;
        const T* wrow = pw + ci * Cout;
        T* gwrow = gw ? gw + ci * Cout : nullptr;
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* grow = gbk + co * P;
          if (gwrow) {
            T acc = T(0);
            for (std::size_t p = 0; p < P; ++p) acc += xrow[p] * grow[p];
            gwrow[co] += acc;
          }
          if (gxrow) {
            const T wv = wrow[co];
            for (std::size_t p = 0; p < P; ++p) gxrow[p] += wv * grow[p];
          }
        }
      }
    }
  });
}

// ---- plain-tensor image resampling (not differentiated) ----

enum class Resample { nearest, bilinear, bicubic };

namespace detail {

inline double cubic_kernel(double s) {
  // Catmull-Rom (a = -0.5)
  s = std::abs(s);
  if (s <= 1.0) return 1.5 * s * s * s - 2.5 * s * s + 1.0;
  if (s < 2.0) return -0.5 * s * s * s + 2.5 * s * s - 4.0 * s + 2.0;
  return 0.0;
}

struct TapTable {
  std::vector<int> idx;     // ntaps per output coordinate, clamped
  std::vector<double> wgt;
  int ntaps = 0;
};

inline TapTable make_taps(std::size_t n_in, std::size_t n_out, std::size_t factor, Resample mode) {
  TapTable t;
  t.ntaps = mode == Resample::nearest ? 1 : mode == Resample::bilinear ? 2 : 4;
  t.idx.resize(n_out * t.ntaps);
  t.wgt.resize(n_out * t.ntaps);
  const auto clampi = [&](long v) {
    return int(std::max(0L, std::min(long(n_in) - 1, v)));
  };
  for (std::size_t d = 0; d < n_out; ++d) {
    const double src = (double(d) + 0.5) / double(factor) - 0.5;
    const long i0 = long(std::floor(src));
    const double f = src - double(i0);
    switch (mode) {
      case Resample::nearest:
        t.idx[d] = clampi(long(std::floor(src + 0.5)));
        t.wgt[d] = 1.0;
        break;
      case Resample::bilinear:
        t.idx[d * 2] = clampi(i0);
        t.idx[d * 2 + 1] = clampi(i0 + 1);
        t.wgt[d * 2] = 1.0 - f;
        t.wgt[d * 2 + 1] = f;
        break;
      case Resample::bicubic:
        for (int k = 0; k < 4; ++k) t.idx[d * 4 + k] = clampi(i0 - 1 + k);
        t.wgt[d * 4] = cubic_kernel(f + 1.0);
        t.wgt[d * 4 + 1] = cubic_kernel(f);
        t.wgt[d * 4 + 2] = cubic_kernel(1.0 - f);
        t.wgt[d * 4 + 3] = cubic_kernel(2.0 - f);
        break;
    }
  }
  return t;
}

}  // namespace detail

// Integer-factor upsampling of [B, C, H, W] with half-pixel centers and
// clamped borders.
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, std::size_t factor, Resample mode) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("upsample: input must be rank 4, got " + shape_str(s));
  if (factor == 0) throw std::invalid_argument("upsample: factor must be positive");
  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  const std::size_t Ho = H * factor, Wo = W * factor;
  auto ty = detail::make_taps(H, Ho, factor, mode);
  auto tx = detail::make_taps(W, Wo, factor, mode);
  const int nt = ty.ntaps;
  Tensor<T> out({B, C, Ho, Wo});
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = px + bc * H * W;
    T* oplane = po + bc * Ho * Wo;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        double acc = 0.0;
        for (int a = 0; a < nt; ++a) {
          const double wy = ty.wgt[oh * nt + a];
          if (wy == 0.0) continue;
          const T* row = plane + std::size_t(ty.idx[oh * nt + a]) * W;
          double racc = 0.0;
          for (int b2 = 0; b2 < nt; ++b2)
            racc += tx.wgt[ow * nt + b2] * double(row[tx.idx[ow * nt + b2]]);
          acc += wy * racc;
        }
        oplane[oh * Wo + ow] = T(acc);
      }
    }
  }
  require_finite(out, "upsample");
  return out;
}

// Gaussian blur with an odd square kernel, replicated borders.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, double sigma, int ksize) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("gaussian_blur: input must be rank 4");
  if (ksize < 1 || ksize % 2 == 0) throw std::invalid_argument("gaussian_blur: kernel must be odd");
  if (sigma <= 0) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;

  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  Tensor<T> tmp(s), out(s);
  const T* px = x.data();
  T* pt = tmp.data();
  T* po = out.data();
  auto clampi = [](long v, long n) { return std::size_t(std::max(0L, std::min(n - 1, v))); };
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = px + bc * H * W;
    T* tplane = pt + bc * H * W;
    for (std::size_t rr = 0; rr < H; ++rr)
      for (std::size_t cc = 0; cc < W; ++cc) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * double(plane[rr * W + clampi(long(cc) + i, long(W))]);
        tplane[rr * W + cc] = T(acc);
      }
    T* oplane = po + bc * H * W;
    for (std::size_t rr = 0; rr < H; ++rr)
      for (std::size_t cc = 0; cc < W; ++cc) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * double(tplane[clampi(long(rr) + i, long(H)) * W + cc]);
        oplane[rr * W + cc] = T(acc);
      }
  }
  return out;
}

// Keep every factor-th sample starting at offset.
template <typename T>
Tensor<T> decimate(const Tensor<T>& x, std::size_t factor, std::size_t offset = 0) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("decimate: input must be rank 4");
  if (factor == 0 || s[2] % factor || s[3] % factor)
    throw std::invalid_argument("decimate: factor must divide spatial extents");
  if (offset >= factor) throw std::invalid_argument("decimate: offset must be below factor");
  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  const std::size_t Ho = H / factor, Wo = W / factor;
  Tensor<T> out({B, C, Ho, Wo});
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow)
        po[bc * Ho * Wo + oh * Wo + ow] =
            px[bc * H * W + (oh * factor + offset) * W + (ow * factor + offset)];
  return out;
}

}  // namespace mipan

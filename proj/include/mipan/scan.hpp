#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "mipan/autograd.hpp"
#include "mipan/ops.hpp"
#include "mipan/tensor.hpp"

namespace mipan {

// Selective-scan parameter group. One group drives one scan direction and is
// shared by both modalities inside it.
template <typename T>
struct SsmParams {
  std::size_t channels = 0;
  std::size_t state_dim = 0;
  NodePtr<T> a_log;    // [C,N], A = -exp(a_log)
  NodePtr<T> d_skip;   // [C]
  NodePtr<T> w_delta;  // [C,C], input channel -> pre-activation channel
  NodePtr<T> b_delta;  // [C]
  NodePtr<T> w_b;      // [C,N]
  NodePtr<T> w_c;      // [C,N]

  std::vector<NodePtr<T>> leaves() const { return {a_log, d_skip, w_delta, b_delta, w_b, w_c}; }
};

// dt_min/dt_max bound the expected step size at zero input: the bias is the
// softplus inverse of a log-uniform draw from [dt_min, dt_max].
template <typename T>
SsmParams<T> make_ssm_params(std::size_t C, std::size_t N, std::mt19937_64& g,
                             double dt_min = 1e-3, double dt_max = 1e-1) {
  if (C == 0 || N == 0) throw std::invalid_argument("ssm params: channels and state dim must be positive");
  SsmParams<T> p;
  p.channels = C;
  p.state_dim = N;

  Tensor<T> a_log({C, N});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t n = 0; n < N; ++n) a_log[{c, n}] = T(std::log(double(n + 1)));
  p.a_log = make_param(std::move(a_log));

  Tensor<T> d({C});
  d.fill(T(1));
  p.d_skip = make_param(std::move(d));

  const T bound = T(std::sqrt(1.0 / double(C)));
  std::uniform_real_distribution<double> u{-double(bound), double(bound)};
  auto fill_uniform = [&](Shape s) {
    Tensor<T> t(std::move(s));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(u(g));
    return t;
  };
  p.w_delta = make_param(fill_uniform({C, C}));
  p.w_b = make_param(fill_uniform({C, N}));
  p.w_c = make_param(fill_uniform({C, N}));

  std::uniform_real_distribution<double> lu{std::log(dt_min), std::log(dt_max)};
  Tensor<T> bd({C});
  for (std::size_t c = 0; c < C; ++c) {
    const double dt = std::exp(lu(g));
    bd[{c}] = T(std::log(std::expm1(dt)));
  }
  p.b_delta = make_param(std::move(bd));
  return p;
}

// One discretized token: h_t = a (.) h_{t-1} + b, y_t = <c, h_t> + D (.) x.
template <typename T>
struct ScanStep {
  Tensor<T> a;  // [C,N], in (0,1] when produced by discretize
  Tensor<T> b;  // [C,N]
  Tensor<T> c;  // [N]
  Tensor<T> x;  // [C], original token (skip path)
};

template <typename T>
ScanStep<T> discretize(const Tensor<T>& x, const SsmParams<T>& p) {
  if (x.shape() != Shape({p.channels}))
    throw std::invalid_argument("discretize: token must be [C]");
  const std::size_t C = p.channels, N = p.state_dim;
  const T* wd = p.w_delta->value.data();
  const T* bd = p.b_delta->value.data();
  const T* wb = p.w_b->value.data();
  const T* wc = p.w_c->value.data();
  const T* al = p.a_log->value.data();

  std::vector<T> delta(C);
  for (std::size_t c = 0; c < C; ++c) {
    T pre = bd[c];
    for (std::size_t ci = 0; ci < C; ++ci) pre += wd[ci * C + c] * x[ci];
    delta[c] = detail::softplus_v(pre);
    if (!std::isfinite(double(delta[c]))) throw std::runtime_error("discretize: non-finite step size");
  }
  ScanStep<T> s{Tensor<T>({C, N}), Tensor<T>({C, N}), Tensor<T>({N}), x};
  for (std::size_t n = 0; n < N; ++n) {
    T bv = T(0), cv = T(0);
    for (std::size_t c = 0; c < C; ++c) {
      bv += wb[c * N + n] * x[c];
      cv += wc[c * N + n] * x[c];
    }
    s.c[{n}] = cv;
    for (std::size_t c = 0; c < C; ++c) {
      const T A = -std::exp(al[c * N + n]);
      s.a[{c, n}] = std::exp(delta[c] * A);
      s.b[{c, n}] = delta[c] * bv * x[c];
    }
  }
  return s;
}

// Plain-tensor scans over explicit steps. These are the reference semantics;
// the model path uses the packed ssm_scan node below.
template <typename T>
Tensor<T> scan_sequential(const std::vector<ScanStep<T>>& steps, const Tensor<T>& d_skip) {
  if (steps.empty()) throw std::invalid_argument("scan: need at least one step");
  const std::size_t C = steps[0].a.extent(0), N = steps[0].a.extent(1);
  const std::size_t L = steps.size();
  Tensor<T> y({C, L});
  std::vector<T> h(C * N, T(0));
  for (std::size_t t = 0; t < L; ++t) {
    const ScanStep<T>& s = steps[t];
    for (std::size_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::size_t n = 0; n < N; ++n) {
        h[c * N + n] = s.a[{c, n}] * h[c * N + n] + s.b[{c, n}];
        acc += s.c[{n}] * h[c * N + n];
      }
      y[{c, t}] = acc + d_skip[c] * s.x[c];
    }
  }
  require_finite(y, "scan_sequential");
  return y;
}

namespace detail {

// Affine maps h -> a*h + b under composition: apply lhs first, then rhs.
template <typename T>
inline void compose_into(const T* a1, const T* b1, const T* a2, const T* b2, T* ao, T* bo,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T na = a1[i] * a2[i];
    const T nb = a2[i] * b1[i] + b2[i];
    ao[i] = na;
    bo[i] = nb;
  }
}

}  // namespace detail

// Blelloch up-sweep/down-sweep over the affine-map monoid; identical results
// to scan_sequential up to floating-point reassociation.
template <typename T>
Tensor<T> scan_parallel(const std::vector<ScanStep<T>>& steps, const Tensor<T>& d_skip) {
  if (steps.empty()) throw std::invalid_argument("scan: need at least one step");
  const std::size_t C = steps[0].a.extent(0), N = steps[0].a.extent(1);
  const std::size_t L = steps.size();
  const std::size_t CN = C * N;
  std::size_t P = 1;
  while (P < L) P <<= 1;

  std::vector<T> a(P * CN, T(1)), b(P * CN, T(0));
  for (std::size_t t = 0; t < L; ++t) {
    std::copy(steps[t].a.data(), steps[t].a.data() + CN, a.data() + t * CN);
    std::copy(steps[t].b.data(), steps[t].b.data() + CN, b.data() + t * CN);
  }
  // up-sweep
  for (std::size_t d = 1; d < P; d <<= 1)
    for (std::size_t i = 2 * d - 1; i < P; i += 2 * d)
      detail::compose_into(a.data() + (i - d) * CN, b.data() + (i - d) * CN,
                           a.data() + i * CN, b.data() + i * CN,
                           a.data() + i * CN, b.data() + i * CN, CN);
  // down-sweep to an exclusive scan
  std::fill(a.data() + (P - 1) * CN, a.data() + P * CN, T(1));
  std::fill(b.data() + (P - 1) * CN, b.data() + P * CN, T(0));
  std::vector<T> ta(CN), tb(CN);
  for (std::size_t d = P >> 1; d >= 1; d >>= 1)
    for (std::size_t i = 2 * d - 1; i < P; i += 2 * d) {
      T* la = a.data() + (i - d) * CN;
      T* lb = b.data() + (i - d) * CN;
      T* ra = a.data() + i * CN;
      T* rb = b.data() + i * CN;
      std::copy(la, la + CN, ta.data());
      std::copy(lb, lb + CN, tb.data());
      std::copy(ra, ra + CN, la);
      std::copy(rb, rb + CN, lb);
      // incoming prefix first, then the old left subtree total
      detail::compose_into(ra, rb, ta.data(), tb.data(), ra, rb, CN);
    }
  // inclusive state at t = exclusive(t) composed with step t, applied to h0=0
  Tensor<T> y({C, L});
  std::vector<T> ha(CN), hb(CN);
  for (std::size_t t = 0; t < L; ++t) {
    detail::compose_into(a.data() + t * CN, b.data() + t * CN, steps[t].a.data(),
                         steps[t].b.data(), ha.data(), hb.data(), CN);
    for (std::size_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::size_t n = 0; n < N; ++n) acc += steps[t].c[{n}] * hb[c * N + n];
      y[{c, t}] = acc + d_skip[c] * steps[t].x[c];
    }
  }
  require_finite(y, "scan_parallel");
  return y;
}

namespace detail {

template <typename T>
struct ScanSave {
  std::size_t B, C, N, L;
  std::vector<T> xs;     // [B,L,C]
  std::vector<T> delta;  // [B,L,C]
  std::vector<T> sig;    // [B,L,C], sigmoid of the delta pre-activation
  std::vector<T> bv;     // [B,L,N]
  std::vector<T> cv;     // [B,L,N]
  std::vector<T> h;      // [B,L,C,N]
};

}  // namespace detail

// Full selective scan over packed sequences x: [B,C,L] -> y: [B,C,L].
// Forward optionally runs the prefix-scan formulation; gradients always use
// the reverse-time recurrence.
template <typename T>
NodePtr<T> ssm_scan(const NodePtr<T>& x, const SsmParams<T>& p, bool parallel = false) {
  const Shape& sx = x->value.shape();
  if (sx.size() != 3 || sx[1] != p.channels)
    throw std::invalid_argument("ssm_scan: expected [B,C,L] with C = " +
                                std::to_string(p.channels) + ", got " + shape_str(sx));
  const std::size_t B = sx[0], C = sx[1], L = sx[2], N = p.state_dim;

  auto save = std::make_shared<detail::ScanSave<T>>();
  save->B = B; save->C = C; save->N = N; save->L = L;
  save->xs.resize(B * L * C);
  save->delta.resize(B * L * C);
  save->sig.resize(B * L * C);
  save->bv.resize(B * L * N);
  save->cv.resize(B * L * N);
  save->h.resize(B * L * C * N);

  const T* px = x->value.data();
  const T* wd = p.w_delta->value.data();
  const T* bd = p.b_delta->value.data();
  const T* wb = p.w_b->value.data();
  const T* wc = p.w_c->value.data();
  const T* al = p.a_log->value.data();
  const T* dsk = p.d_skip->value.data();

  std::vector<T> A(C * N);
  for (std::size_t i = 0; i < C * N; ++i) A[i] = -std::exp(al[i]);

  Tensor<T> out({B, C, L});
  T* po = out.data();
  std::vector<T> acol(C * N);  // per-token decay when running parallel
  std::vector<T> pa, pb;       // prefix buffers (parallel path only)

  for (std::size_t b = 0; b < B; ++b) {
    T* xs = save->xs.data() + b * L * C;
    T* dl = save->delta.data() + b * L * C;
    T* sg = save->sig.data() + b * L * C;
    T* bv = save->bv.data() + b * L * N;
    T* cv = save->cv.data() + b * L * N;
    T* hh = save->h.data() + b * L * C * N;
    const T* xb = px + b * C * L;
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) xs[t * C + c] = xb[c * L + t];

    for (std::size_t t = 0; t < L; ++t) {
      const T* xt = xs + t * C;
      T* dt = dl + t * C;
      T* st = sg + t * C;
      for (std::size_t c = 0; c < C; ++c) {
        T pre = bd[c];
        for (std::size_t ci = 0; ci < C; ++ci) pre += wd[ci * C + c] * xt[ci];
        dt[c] = detail::softplus_v(pre);
        st[c] = detail::sigmoid_v(pre);
      }
      T* bvt = bv + t * N;
      T* cvt = cv + t * N;
      for (std::size_t n = 0; n < N; ++n) {
        T b_acc = T(0), c_acc = T(0);
        for (std::size_t c = 0; c < C; ++c) {
          b_acc += wb[c * N + n] * xt[c];
          c_acc += wc[c * N + n] * xt[c];
        }
        bvt[n] = b_acc;
        cvt[n] = c_acc;
      }
    }

    if (!parallel) {
      const T* hprev = nullptr;
      for (std::size_t t = 0; t < L; ++t) {
        const T* xt = xs + t * C;
        const T* dt = dl + t * C;
        const T* bvt = bv + t * N;
        T* ht = hh + t * C * N;
        for (std::size_t c = 0; c < C; ++c) {
          const T scale = dt[c] * xt[c];
          const T* Ac = A.data() + c * N;
          T* hc = ht + c * N;
          const T* hp = hprev ? hprev + c * N : nullptr;
          for (std::size_t n = 0; n < N; ++n) {
            const T av = std::exp(dt[c] * Ac[n]);
            hc[n] = (hp ? av * hp[n] : T(0)) + scale * bvt[n];
          }
        }
        hprev = ht;
      }
    } else {
      const std::size_t CN = C * N;
      std::size_t P = 1;
      while (P < L) P <<= 1;
      pa.assign(P * CN, T(1));
      pb.assign(P * CN, T(0));
      for (std::size_t t = 0; t < L; ++t) {
        const T* xt = xs + t * C;
        const T* dt = dl + t * C;
        const T* bvt = bv + t * N;
        T* at = pa.data() + t * CN;
        T* bt = pb.data() + t * CN;
        for (std::size_t c = 0; c < C; ++c) {
          const T scale = dt[c] * xt[c];
          const T* Ac = A.data() + c * N;
          for (std::size_t n = 0; n < N; ++n) {
            at[c * N + n] = std::exp(dt[c] * Ac[n]);
            bt[c * N + n] = scale * bvt[n];
          }
        }
      }
      for (std::size_t d = 1; d < P; d <<= 1)
        for (std::size_t i = 2 * d - 1; i < P; i += 2 * d)
          detail::compose_into(pa.data() + (i - d) * CN, pb.data() + (i - d) * CN,
                               pa.data() + i * CN, pb.data() + i * CN,
                               pa.data() + i * CN, pb.data() + i * CN, CN);
      std::fill(pa.data() + (P - 1) * CN, pa.data() + P * CN, T(1));
      std::fill(pb.data() + (P - 1) * CN, pb.data() + P * CN, T(0));
      std::vector<T> ta(CN), tb(CN);
      for (std::size_t d = P >> 1; d >= 1; d >>= 1)
        for (std::size_t i = 2 * d - 1; i < P; i += 2 * d) {
          T* la = pa.data() + (i - d) * CN;
          T* lb = pb.data() + (i - d) * CN;
          T* ra = pa.data() + i * CN;
          T* rb = pb.data() + i * CN;
          std::copy(la, la + CN, ta.data());
          std::copy(lb, lb + CN, tb.data());
          std::copy(ra, ra + CN, la);
          std::copy(rb, rb + CN, lb);
          detail::compose_into(ra, rb, ta.data(), tb.data(), ra, rb, CN);
        }
      for (std::size_t t = 0; t < L; ++t) {
        const T* xt = xs + t * C;
        const T* dt = dl + t * C;
        const T* bvt = bv + t * N;
        T* ht = hh + t * C * N;
        const T* ea = pa.data() + t * CN;
        const T* eb = pb.data() + t * CN;
        for (std::size_t c = 0; c < C; ++c) {
          const T scale = dt[c] * xt[c];
          const T* Ac = A.data() + c * N;
          for (std::size_t n = 0; n < N; ++n) {
            acol[c * N + n] = std::exp(dt[c] * Ac[n]);
            ht[c * N + n] = acol[c * N + n] * eb[c * N + n] + scale * bvt[n];
            (void)ea;
          }
        }
      }
    }

    T* yb = po + b * C * L;
    for (std::size_t t = 0; t < L; ++t) {
      const T* xt = xs + t * C;
      const T* cvt = cv + t * N;
      const T* ht = hh + t * C * N;
      for (std::size_t c = 0; c < C; ++c) {
        T acc = T(0);
        const T* hc = ht + c * N;
        for (std::size_t n = 0; n < N; ++n) acc += cvt[n] * hc[n];
        yb[c * L + t] = acc + dsk[c] * xt[c];
      }
    }
  }
  require_finite(out, "ssm_scan");

  std::vector<NodePtr<T>> parents = {x,       p.a_log, p.d_skip, p.w_delta,
                                     p.b_delta, p.w_b,   p.w_c};
  return make_op_node<T>(std::move(out), "ssm_scan", parents, [save](Node<T>& n) {
    const std::size_t B = save->B, C = save->C, N = save->N, L = save->L;
    const NodePtr<T>& x = n.parents[0];
    const NodePtr<T>& a_log = n.parents[1];
    const NodePtr<T>& d_skip = n.parents[2];
    const NodePtr<T>& w_delta = n.parents[3];
    const NodePtr<T>& b_delta = n.parents[4];
    const NodePtr<T>& w_b = n.parents[5];
    const NodePtr<T>& w_c = n.parents[6];

    const T* g = n.grad.data();
    const T* al = a_log->value.data();
    const T* dsk = d_skip->value.data();
    const T* wd = w_delta->value.data();
    const T* wb = w_b->value.data();
    const T* wc = w_c->value.data();

    T* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
    T* g_al = a_log->requires_grad ? a_log->ensure_grad().data() : nullptr;
    T* g_d = d_skip->requires_grad ? d_skip->ensure_grad().data() : nullptr;
    T* g_wd = w_delta->requires_grad ? w_delta->ensure_grad().data() : nullptr;
    T* g_bd = b_delta->requires_grad ? b_delta->ensure_grad().data() : nullptr;
    T* g_wb = w_b->requires_grad ? w_b->ensure_grad().data() : nullptr;
    T* g_wc = w_c->requires_grad ? w_c->ensure_grad().data() : nullptr;

    std::vector<T> A(C * N);
    for (std::size_t i = 0; i < C * N; ++i) A[i] = -std::exp(al[i]);

    std::vector<T> dH(C * N);
    std::vector<T> gA(C * N);
    std::vector<T> dcv(N), gbv(N);
    std::vector<T> gdpre(C), dxt(C);

    for (std::size_t b = 0; b < B; ++b) {
      const T* xs = save->xs.data() + b * L * C;
      const T* dl = save->delta.data() + b * L * C;
      const T* sg = save->sig.data() + b * L * C;
      const T* bv = save->bv.data() + b * L * N;
      const T* cv = save->cv.data() + b * L * N;
      const T* hh = save->h.data() + b * L * C * N;
      const T* gb = g + b * C * L;
      T* gxb = gx ? gx + b * C * L : nullptr;

      std::fill(dH.begin(), dH.end(), T(0));
      for (std::size_t t = L; t-- > 0;) {
        const T* xt = xs + t * C;
        const T* dt = dl + t * C;
        const T* st = sg + t * C;
        const T* bvt = bv + t * N;
        const T* cvt = cv + t * N;
        const T* ht = hh + t * C * N;
        const T* hprev = t > 0 ? hh + (t - 1) * C * N : nullptr;

        std::fill(dcv.begin(), dcv.end(), T(0));
        std::fill(gbv.begin(), gbv.end(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
          const T gt = gb[c * L + t];
          const T* hc = ht + c * N;
          T* dHc = dH.data() + c * N;
          for (std::size_t n = 0; n < N; ++n) {
            dcv[n] += gt * hc[n];
            dHc[n] += gt * cvt[n];
          }
          if (g_d) g_d[c] += gt * xt[c];
          dxt[c] = gt * dsk[c];
        }

        for (std::size_t c = 0; c < C; ++c) {
          const T* Ac = A.data() + c * N;
          T* dHc = dH.data() + c * N;
          T* gAc = gA.data() + c * N;
          const T scale = dt[c] * xt[c];
          T gdelta = T(0), gscale = T(0);
          for (std::size_t n = 0; n < N; ++n) {
            const T av = std::exp(dt[c] * Ac[n]);
            const T da = hprev ? dHc[n] * hprev[c * N + n] : T(0);
            gdelta += da * av * Ac[n];
            gAc[n] += da * av * dt[c];
            gscale += dHc[n] * bvt[n];
            gbv[n] += dHc[n] * scale;
            dHc[n] *= av;  // pass to t-1
          }
          gdelta += gscale * xt[c];
          dxt[c] += gscale * dt[c];
          gdpre[c] = gdelta * st[c];
        }

        for (std::size_t c = 0; c < C; ++c) {
          if (g_bd) g_bd[c] += gdpre[c];
          if (g_wd)
            for (std::size_t ci = 0; ci < C; ++ci) g_wd[ci * C + c] += xt[ci] * gdpre[c];
        }
        for (std::size_t ci = 0; ci < C; ++ci) {
          T acc = T(0);
          for (std::size_t c = 0; c < C; ++c) acc += wd[ci * C + c] * gdpre[c];
          dxt[ci] += acc;
        }
        for (std::size_t c = 0; c < C; ++c) {
          T acc = T(0);
          for (std::size_t n = 0; n < N; ++n) {
            acc += wb[c * N + n] * gbv[n] + wc[c * N + n] * dcv[n];
            if (g_wb) g_wb[c * N + n] += xt[c] * gbv[n];
            if (g_wc) g_wc[c * N + n] += xt[c] * dcv[n];
          }
          dxt[c] += acc;
          if (gxb) gxb[c * L + t] += dxt[c];
        }
      }
    }
    if (g_al)
      for (std::size_t i = 0; i < C * N; ++i) g_al[i] += gA[i] * A[i];
  });
}

}  // namespace mipan

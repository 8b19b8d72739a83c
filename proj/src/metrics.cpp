#include "mipan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mipan/nn.hpp"

namespace mipan {

namespace {

void check_image(const Tensor<double>& t, const char* who) {
  if (t.shape().size() != 3)
    throw std::invalid_argument(std::string(who) + ": expected [C,H,W], got " +
                                shape_str(t.shape()));
}

void check_pair(const Tensor<double>& x, const Tensor<double>& y, const char* who) {
  check_image(x, who);
  if (x.shape() != y.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(x.shape()) +
                                " vs " + shape_str(y.shape()));
}

// Separable valid-region filter of one plane; out is (H-k+1) x (W-k+1).
std::vector<double> window_filter(const double* p, std::size_t H, std::size_t W,
                                  const std::vector<double>& k) {
  const std::size_t kk = k.size(), Wo = W - kk + 1, Ho = H - kk + 1;
  std::vector<double> tmp(H * Wo), out(Ho * Wo);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < Wo; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < kk; ++i) acc += k[i] * p[r * W + c + i];
      tmp[r * Wo + c] = acc;
    }
  for (std::size_t r = 0; r < Ho; ++r)
    for (std::size_t c = 0; c < Wo; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < kk; ++i) acc += k[i] * tmp[(r + i) * Wo + c];
      out[r * Wo + c] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Tensor<double>& x, const Tensor<double>& y, double peak) {
  check_pair(x, y, "psnr");
  double mse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    mse += d * d;
  }
  mse /= double(x.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor<double>& x, const Tensor<double>& y) {
  check_pair(x, y, "ssim");
  const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  constexpr std::size_t kWin = 11;
  constexpr double kSigma = 1.5, kK1 = 0.01, kK2 = 0.03, kRange = 1.0;
  if (H < kWin || W < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  std::vector<double> k(kWin);
  double ksum = 0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double d = double(i) - double(kWin / 2);
    k[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    ksum += k[i];
  }
  for (double& v : k) v /= ksum;

  const double c1 = (kK1 * kRange) * (kK1 * kRange);
  const double c2 = (kK2 * kRange) * (kK2 * kRange);
  const std::size_t plane = H * W;
  std::vector<double> xx(plane), yy(plane), xy(plane);
  double band_mean = 0;
  for (std::size_t ch = 0; ch < C; ++ch) {
    const double* px = x.data() + ch * plane;
    const double* py = y.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = px[i] * px[i];
      yy[i] = py[i] * py[i];
      xy[i] = px[i] * py[i];
    }
    auto mx = window_filter(px, H, W, k);
    auto my = window_filter(py, H, W, k);
    auto mxx = window_filter(xx.data(), H, W, k);
    auto myy = window_filter(yy.data(), H, W, k);
    auto mxy = window_filter(xy.data(), H, W, k);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double sxx = mxx[i] - mx[i] * mx[i];
      const double syy = myy[i] - my[i] * my[i];
      const double sxy = mxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * sxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2));
    }
    band_mean += acc / double(mx.size());
  }
  return band_mean / double(C);
}

double sam(const Tensor<double>& x, const Tensor<double>& y) {
  check_pair(x, y, "sam");
  const std::size_t C = x.extent(0), plane = x.extent(1) * x.extent(2);
  double acc = 0;
  std::size_t kept = 0;
  std::vector<double> u(C), v(C);
  for (std::size_t p = 0; p < plane; ++p) {
    double nx = 0, ny = 0;
    for (std::size_t c = 0; c < C; ++c) {
      u[c] = x[c * plane + p];
      v[c] = y[c * plane + p];
      nx += u[c] * u[c];
      ny += v[c] * v[c];
    }
    if (nx == 0 || ny == 0) continue;
    nx = std::sqrt(nx);
    ny = std::sqrt(ny);
    // angle via the half-chord form: exact zero for parallel vectors and
    // stable where arccos loses precision
    double dm = 0, dp = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double a = u[c] / nx, b = v[c] / ny;
      dm += (a - b) * (a - b);
      dp += (a + b) * (a + b);
    }
    acc += 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("sam: every pixel has a zero spectral vector");
  return acc / double(kept);
}

double ergas(const Tensor<double>& x, const Tensor<double>& y, double ratio) {
  check_pair(x, y, "ergas");
  const std::size_t C = x.extent(0), plane = x.extent(1) * x.extent(2);
  double acc = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const double* px = x.data() + c * plane;
    const double* py = y.data() + c * plane;
    double mse = 0, mean = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = px[i] - py[i];
      mse += d * d;
      mean += py[i];
    }
    mse /= double(plane);
    mean /= double(plane);
    if (mean == 0) throw std::invalid_argument("ergas: reference band has zero mean");
    acc += mse / (mean * mean);
  }
  return 100.0 / ratio * std::sqrt(acc / double(C));
}

namespace {

double q_block(const double* x, const double* y, std::size_t W, std::size_t r0, std::size_t c0,
               std::size_t n) {
  double mx = 0, my = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      mx += x[(r0 + r) * W + c0 + c];
      my += y[(r0 + r) * W + c0 + c];
    }
  const double cnt = double(n * n);
  mx /= cnt;
  my /= cnt;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double dx = x[(r0 + r) * W + c0 + c] - mx;
      const double dy = y[(r0 + r) * W + c0 + c] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  sxx /= cnt - 1;
  syy /= cnt - 1;
  sxy /= cnt - 1;
  const double lum_den = mx * mx + my * my;
  const double con_den = sxx + syy;
  double q;
  if (con_den == 0 && lum_den == 0)
    q = 1.0;
  else if (con_den == 0)
    q = 2 * mx * my / lum_den;
  else if (lum_den == 0)
    q = 0.0;
  else
    q = 4 * sxy * mx * my / (con_den * lum_den);
  return std::clamp(q, -1.0, 1.0);
}

}  // namespace

double q_index(const Tensor<double>& x, const Tensor<double>& y) {
  if (x.shape().size() != 2 || x.shape() != y.shape())
    throw std::invalid_argument("q_index: expected two matching [H,W] planes");
  const std::size_t H = x.extent(0), W = x.extent(1);
  constexpr std::size_t kBlock = 32;
  const std::size_t bh = std::min(kBlock, H), bw = std::min(kBlock, W);
  const std::size_t n = std::min(bh, bw);
  double acc = 0;
  std::size_t blocks = 0;
  for (std::size_t r = 0; r + n <= H; r += kBlock)
    for (std::size_t c = 0; c + n <= W; c += kBlock) {
      acc += q_block(x.data(), y.data(), W, r, c, n);
      ++blocks;
    }
  if (blocks == 0) throw std::invalid_argument("q_index: image has no scorable block");
  return acc / double(blocks);
}

QnrOut qnr(const Tensor<double>& fused, const Tensor<double>& lms, const Tensor<double>& pan,
           std::size_t ratio) {
  check_image(fused, "qnr");
  check_image(lms, "qnr");
  check_image(pan, "qnr");
  const std::size_t C = fused.extent(0), H = fused.extent(1), W = fused.extent(2);
  if (lms.extent(0) != C || lms.extent(1) * ratio != H || lms.extent(2) * ratio != W)
    throw std::invalid_argument("qnr: lms extents do not match fused at 1/" +
                                std::to_string(ratio) + " scale");
  if (pan.shape() != Shape({1, H, W}))
    throw std::invalid_argument("qnr: pan must be [1,H,W] at fused scale");
  const std::size_t h = lms.extent(1), w = lms.extent(2);

  Tensor<double> pan4(Shape{1, 1, H, W});
  std::copy(pan.data(), pan.data() + pan.size(), pan4.data());
  Tensor<double> pan_lo4 = decimate(gaussian_blur(pan4, 1.0, 7), ratio, 0);

  auto plane = [](const Tensor<double>& t, std::size_t c, std::size_t hh, std::size_t ww) {
    Tensor<double> out(Shape{hh, ww});
    std::copy(t.data() + c * hh * ww, t.data() + (c + 1) * hh * ww, out.data());
    return out;
  };
  Tensor<double> pan_hi = plane(pan, 0, H, W);
  Tensor<double> pan_lo(Shape{h, w});
  std::copy(pan_lo4.data(), pan_lo4.data() + h * w, pan_lo.data());

  std::vector<Tensor<double>> f_b, l_b;
  for (std::size_t c = 0; c < C; ++c) {
    f_b.push_back(plane(fused, c, H, W));
    l_b.push_back(plane(lms, c, h, w));
  }

  double d_lambda = 0;
  if (C > 1) {
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = i + 1; j < C; ++j) {
        d_lambda += std::abs(q_index(f_b[i], f_b[j]) - q_index(l_b[i], l_b[j]));
        ++pairs;
      }
    d_lambda /= double(pairs);
  }

  double d_s = 0;
  for (std::size_t c = 0; c < C; ++c)
    d_s += std::abs(q_index(f_b[c], pan_hi) - q_index(l_b[c], pan_lo));
  d_s /= double(C);

  return {d_lambda, d_s, (1.0 - d_lambda) * (1.0 - d_s)};
}

namespace {

std::string fmt_opt(const std::optional<double>& v, const char* fmt) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "name,psnr,ssim,sam,ergas,d_lambda,d_s,qnr\n";
  for (const auto& [name, r] : rows) {
    os << name;
    for (const auto* v : {&r.psnr, &r.ssim, &r.sam, &r.ergas, &r.d_lambda, &r.d_s, &r.qnr})
      os << "," << fmt_opt(*v, "%.6f");
    os << "\n";
  }
  return os.str();
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  char head[160];
  std::snprintf(head, sizeof head, "%-18s %9s %8s %8s %8s %9s %8s %8s\n", "name", "PSNR", "SSIM",
                "SAM", "ERGAS", "D_lambda", "D_S", "QNR");
  os << head;
  for (const auto& [name, r] : rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-18s %9s %8s %8s %8s %9s %8s %8s\n", name.c_str(),
                  fmt_opt(r.psnr, "%.3f").c_str(), fmt_opt(r.ssim, "%.4f").c_str(),
                  fmt_opt(r.sam, "%.4f").c_str(), fmt_opt(r.ergas, "%.4f").c_str(),
                  fmt_opt(r.d_lambda, "%.4f").c_str(), fmt_opt(r.d_s, "%.4f").c_str(),
                  fmt_opt(r.qnr, "%.4f").c_str());
    os << line;
  }
  return os.str();
}

}  // namespace mipan

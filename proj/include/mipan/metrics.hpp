#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mipan/tensor.hpp"

namespace mipan {

// All full-reference metrics take single images [C,H,W] in [0,1] and run in
// double regardless of model precision.

double psnr(const Tensor<double>& x, const Tensor<double>& y, double peak = 1.0);

// 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, range 1.0; mean over
// the valid (fully covered) region, then over bands.
double ssim(const Tensor<double>& x, const Tensor<double>& y);

// Mean spectral angle in radians; zero-vector pixels are skipped.
double sam(const Tensor<double>& x, const Tensor<double>& y);

double ergas(const Tensor<double>& x, const Tensor<double>& y, double ratio = 4.0);

// Universal image quality index between two planes [H,W], averaged over
// 32x32 stride-32 blocks and clamped to [-1,1]. Images smaller than a block
// are scored as one whole-image block.
double q_index(const Tensor<double>& x, const Tensor<double>& y);

struct QnrOut {
  double d_lambda;
  double d_s;
  double qnr;
};

// No-reference protocol: fused [C,H,W] at pan scale, lms [C,H/r,W/r],
// pan [1,H,W]. pan is degraded with a Gaussian (sigma 1, kernel 7) and
// decimated for the reduced-scale comparison.
QnrOut qnr(const Tensor<double>& fused, const Tensor<double>& lms, const Tensor<double>& pan,
           std::size_t ratio = 4);

struct MetricsReport {
  std::optional<double> psnr, ssim, sam, ergas, d_lambda, d_s, qnr;
};

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace mipan

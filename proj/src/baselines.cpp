#include "mipan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace mipan {

namespace {

constexpr double kFloor = 1e-4;

Tensor<double> upsample_bands(const Tensor<double>& lms) {
  const Shape& s = lms.shape();
  Tensor<double> lms4(Shape{1, s[0], s[1], s[2]});
  std::copy(lms.data(), lms.data() + lms.size(), lms4.data());
  Tensor<double> up4 = upsample(lms4, 4, Resample::bicubic);
  Tensor<double> up(Shape{s[0], s[1] * 4, s[2] * 4});
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = std::clamp(up4[i], 0.0, 1.0);
  return up;
}

}  // namespace

BaselineOut run_baseline(BaselineKind kind, const Tensor<double>& lms,
                         const Tensor<double>* pan) {
  const Shape& s = lms.shape();
  if (s.size() != 3) throw std::invalid_argument("baseline: lms must be [Cb,h,w]");
  const std::size_t C = s[0], H = s[1] * 4, W = s[2] * 4, plane = H * W;
  if (kind == BaselineKind::bicubic) {
    if (pan) throw std::invalid_argument("baseline: bicubic takes no pan");
    return {upsample_bands(lms), 0.0};
  }
  if (!pan) throw std::invalid_argument(std::string("baseline: ") + baseline_name(kind) +
                                        " needs a pan image");
  if (pan->shape() != Shape({1, H, W}))
    throw std::invalid_argument("baseline: pan must be [1," + std::to_string(H) + "," +
                                std::to_string(W) + "], got " + shape_str(pan->shape()));

  Tensor<double> up = upsample_bands(lms);
  std::vector<double> intensity(plane, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* b = up.data() + c * plane;
    for (std::size_t p = 0; p < plane; ++p) intensity[p] += b[p] / double(C);
  }

  BaselineOut out;
  out.fused = Tensor<double>(Shape{C, H, W});
  std::size_t floored = 0;

  switch (kind) {
    case BaselineKind::ihs: {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < plane; ++p)
          out.fused[c * plane + p] =
              std::clamp(up[c * plane + p] + ((*pan)[p] - intensity[p]), 0.0, 1.0);
      break;
    }
    case BaselineKind::brovey: {
      for (std::size_t p = 0; p < plane; ++p) {
        if (intensity[p] < kFloor) ++floored;
        const double ratio = (*pan)[p] / std::max(intensity[p], kFloor);
        for (std::size_t c = 0; c < C; ++c)
          out.fused[c * plane + p] = std::clamp(up[c * plane + p] * ratio, 0.0, 1.0);
      }
      break;
    }
    case BaselineKind::sfim: {
      Tensor<double> pan4(Shape{1, 1, H, W});
      std::copy(pan->data(), pan->data() + plane, pan4.data());
      Tensor<double> low = gaussian_blur(pan4, 1.0, 7);
      for (std::size_t p = 0; p < plane; ++p) {
        if (low[p] < kFloor) ++floored;
        const double ratio = (*pan)[p] / std::max(low[p], kFloor);
        for (std::size_t c = 0; c < C; ++c)
          out.fused[c * plane + p] = std::clamp(up[c * plane + p] * ratio, 0.0, 1.0);
      }
      break;
    }
    case BaselineKind::bicubic: break;  // handled above
  }
  out.floor_fraction = double(floored) / double(plane);
  return out;
}

}  // namespace mipan

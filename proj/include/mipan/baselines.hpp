#pragma once

#include <stdexcept>
#include <string>

#include "mipan/model.hpp"
#include "mipan/nn.hpp"
#include "mipan/tensor.hpp"

namespace mipan {

enum class BaselineKind { bicubic, ihs, brovey, sfim };

inline const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::bicubic: return "bicubic";
    case BaselineKind::ihs: return "ihs";
    case BaselineKind::brovey: return "brovey";
    case BaselineKind::sfim: return "sfim";
  }
  return "?";
}

inline BaselineKind baseline_from_name(const std::string& s) {
  for (BaselineKind k :
       {BaselineKind::bicubic, BaselineKind::ihs, BaselineKind::brovey, BaselineKind::sfim})
    if (s == baseline_name(k)) return k;
  throw std::invalid_argument("unknown baseline: " + s);
}

struct BaselineOut {
  Tensor<double> fused;        // [Cb,H,W] in [0,1]
  double floor_fraction = 0;   // pixels whose ratio denominator hit the floor
};

// lms [Cb,h,w]; pan [1,4h,4w] for the pan-requiring kinds, null for bicubic.
BaselineOut run_baseline(BaselineKind kind, const Tensor<double>& lms,
                         const Tensor<double>* pan);

// Zero-shot comparison protocol for dual-input models without a real second
// modality: the band mean of the upsampled input stands in for pan.
template <typename T>
Tensor<T> adapted_single_input(Model<T>& model, const Tensor<T>& lms, bool parallel = false) {
  if (model.config().mode != ModalityMode::dual)
    throw std::invalid_argument("adapted_single_input: needs a dual-input model");
  const Shape& s = lms.shape();
  if (s.size() != 4) throw std::invalid_argument("adapted_single_input: lms must be [B,Cb,h,w]");
  Tensor<T> up = upsample(lms, model.config().ratio, Resample::bicubic);
  const std::size_t B = s[0], Cb = s[1], H = up.extent(2), W = up.extent(3);
  Tensor<T> pseudo(Shape{B, 1, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < H * W; ++p) {
      double acc = 0;
      for (std::size_t c = 0; c < Cb; ++c) acc += double(up[(b * Cb + c) * H * W + p]);
      pseudo[b * H * W + p] = T(acc / double(Cb));
    }
  return model.forward(lms, &pseudo, parallel).hms->value;
}

}  // namespace mipan

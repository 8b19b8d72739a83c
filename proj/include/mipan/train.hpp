#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mipan/autograd.hpp"
#include "mipan/checkpoint.hpp"
#include "mipan/model.hpp"
#include "mipan/ops.hpp"

namespace mipan {

// Mean absolute error. The mean (rather than a plain norm) keeps the loss
// magnitude independent of resolution and batch size.
template <typename T>
NodePtr<T> l1_loss(const NodePtr<T>& pred, const NodePtr<T>& target) {
  if (pred->value.shape() != target->value.shape())
    throw std::invalid_argument("l1_loss: shape mismatch " + shape_str(pred->value.shape()) +
                                " vs " + shape_str(target->value.shape()));
  const std::size_t n = pred->value.size();
  Tensor<T> out({1});
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i)
    acc += std::abs(double(pred->value[i]) - double(target->value[i]));
  out[0] = T(acc / double(n));
  return make_op_node<T>(
      std::move(out), "l1_loss", {pred, target}, [n](Node<T>& node) {
        const T g = node.ensure_grad()[0] / T(n);
        auto& p = *node.parents[0];
        auto& t = *node.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
          const T d = p.value[i] - t.value[i];
          const T s = d > T(0) ? g : d < T(0) ? -g : T(0);
          if (p.requires_grad) p.ensure_grad()[i] += s;
          if (t.requires_grad) t.ensure_grad()[i] -= s;
        }
      });
}

struct LrSchedule {
  double lr_start = 5e-4;
  double lr_end = 5e-8;
  std::size_t total_steps = 1;
};

inline double cosine_lr(std::size_t step, const LrSchedule& s) {
  if (step > s.total_steps) throw std::invalid_argument("cosine_lr: step past end of schedule");
  if (step == 0) return s.lr_start;
  if (step == s.total_steps) return s.lr_end;
  const double t = double(step) / double(s.total_steps);
  return s.lr_end + 0.5 * (s.lr_start - s.lr_end) * (1.0 + std::cos(t * 3.14159265358979323846));
}

// Scales every gradient in place when the global L2 norm exceeds max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(const std::vector<NodePtr<T>>& params, double max_norm = 4.0) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p || p->grad.empty()) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i) sq += double(p->grad[i]) * double(p->grad[i]);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T s = T(max_norm / norm);
    for (const auto& p : params) {
      if (!p || p->grad.empty()) continue;
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
  }
  return norm;
}

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor<double>> m, v;

  void init(const std::vector<NodePtr<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p->value.shape());
      v.emplace_back(p->value.shape());
    }
    step = 0;
  }
};

// Bias-corrected Adam; moments are kept in double so float training does not
// lose the tail of v at small gradients.
template <typename T>
void adam_step(const std::vector<NodePtr<T>>& params, AdamState<T>& st, double lr) {
  if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: state not initialized");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    Tensor<T>& g = p.ensure_grad();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = double(g[i]);
      st.m[k][i] = st.beta1 * st.m[k][i] + (1.0 - st.beta1) * gi;
      st.v[k][i] = st.beta2 * st.v[k][i] + (1.0 - st.beta2) * gi * gi;
      const double mhat = st.m[k][i] / c1;
      const double vhat = st.v[k][i] / c2;
      p.value[i] = T(double(p.value[i]) - lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

template <typename T>
struct TrainSample {
  Tensor<T> lms;  // [1,Cb,h,w]
  Tensor<T> pan;  // [1,1,4h,4w]; empty in ms-only mode
  Tensor<T> gt;   // [1,Cb,4h,4w]
};

struct TrainConfig {
  std::size_t steps = 300;
  std::size_t batch = 2;
  double lr_start = 5e-4;
  double lr_end = 5e-8;
  double clip_norm = 4.0;
  std::uint64_t seed = 0;
  bool parallel_scan = false;
  std::string curve_path;       // loss curve CSV, skipped when empty
  std::string checkpoint_path;  // final checkpoint, skipped when empty
};

struct CurvePoint {
  std::size_t step;
  double lr;
  double loss;
};

inline void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("train: cannot open " + path + " for writing");
  os << "step,lr,loss\n";
  os.precision(17);
  for (const auto& p : curve) os << p.step << "," << p.lr << "," << p.loss << "\n";
  if (!os) throw std::runtime_error("train: write failed for " + path);
}

namespace detail {

template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& parts) {
  const Shape& s0 = parts[0]->shape();
  Shape out_shape = s0;
  out_shape[0] = 0;
  for (const auto* p : parts) {
    if (Shape(p->shape().begin() + 1, p->shape().end()) != Shape(s0.begin() + 1, s0.end()))
      throw std::invalid_argument("train: samples in a batch must share extents");
    out_shape[0] += p->shape()[0];
  }
  Tensor<T> out(out_shape);
  std::size_t off = 0;
  for (const auto* p : parts) {
    std::copy(p->data(), p->data() + p->size(), out.data() + off);
    off += p->size();
  }
  return out;
}

}  // namespace detail

// Plain seeded loop: shuffle each epoch, assemble a batch, forward, L1,
// backward, clip, Adam with per-step cosine decay. Single-threaded so a
// fixed seed reproduces the curve bit for bit.
template <typename T>
std::vector<CurvePoint> train(Model<T>& model, const std::vector<TrainSample<T>>& data,
                              const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const bool dual = model.config().mode == ModalityMode::dual;
  for (const auto& s : data)
    if (s.pan.empty() == dual)
      throw std::invalid_argument("train: sample modalities do not match the model mode");

  auto params = model.params().nodes();
  AdamState<T> opt;
  opt.init(params);
  LrSchedule sched{cfg.lr_start, cfg.lr_end, cfg.steps == 0 ? 1 : cfg.steps};

  std::mt19937_64 g(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), g);
  std::size_t cursor = 0;

  std::vector<CurvePoint> curve;
  curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<const Tensor<T>*> lms_parts, pan_parts, gt_parts;
    const std::size_t bs = std::min<std::size_t>(std::max<std::size_t>(cfg.batch, 1), data.size());
    for (std::size_t k = 0; k < bs; ++k) {
      if (cursor == data.size()) {
        std::shuffle(order.begin(), order.end(), g);
        cursor = 0;
      }
      const TrainSample<T>& s = data[order[cursor++]];
      lms_parts.push_back(&s.lms);
      if (dual) pan_parts.push_back(&s.pan);
      gt_parts.push_back(&s.gt);
    }
    Tensor<T> lms = detail::stack_batch(lms_parts);
    Tensor<T> gt = detail::stack_batch(gt_parts);
    Tensor<T> pan;
    if (dual) pan = detail::stack_batch(pan_parts);

    const double lr = cosine_lr(step, sched);
    auto out = model.forward(lms, dual ? &pan : nullptr, cfg.parallel_scan);
    auto loss = l1_loss(out.hms, make_constant(std::move(gt)));
    const double loss_v = double(loss->value[0]);
    if (!std::isfinite(loss_v))
      throw std::runtime_error("train: loss is not finite at step " + std::to_string(step) +
                               " (lr " + std::to_string(lr) + ")");
    zero_grad(params);
    backward(loss);
    clip_global_norm(params, cfg.clip_norm);
    adam_step(params, opt, lr);
    curve.push_back({step, lr, loss_v});
  }

  if (!cfg.curve_path.empty()) write_curve_csv(cfg.curve_path, curve);
  if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model.params());
  return curve;
}

}  // namespace mipan

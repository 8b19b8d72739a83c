#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "mipan/autograd.hpp"
#include "mipan/layout.hpp"
#include "mipan/ops.hpp"
#include "mipan/scan.hpp"

namespace mipan {

namespace detail {

inline std::vector<std::int64_t> to_index(const std::vector<std::int32_t>& v) {
  return std::vector<std::int64_t>(v.begin(), v.end());
}

// slot -> index into the canonical source vector (modality-0 pixels, then
// modality-1 pixels when present)
inline std::vector<std::int64_t> interleave_map(const ScanLayout& lo) {
  const std::int64_t hw = std::int64_t(lo.pixels());
  std::vector<std::int64_t> map(lo.seq_len());
  for (std::size_t i = 0; i < map.size(); ++i)
    map[i] = std::int64_t(lo.src_modality[i]) * hw + std::int64_t(lo.src_spatial[i]);
  return map;
}

inline std::vector<std::int64_t> inverse_order(const std::vector<std::int32_t>& order) {
  std::vector<std::int64_t> inv(order.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    inv[std::size_t(order[rank])] = std::int64_t(rank);
  return inv;
}

}  // namespace detail

// Gathers both feature maps into one interleaved sequence per direction.
// f_ms, f_p: [B,C,H,W] -> [B, D, C, L] where D = layouts.size().
// For single-modality layouts pass f_p = nullptr; L becomes HW.
template <typename T>
NodePtr<T> tokenize_interleave(const NodePtr<T>& f_ms, const NodePtr<T>& f_p,
                               const std::vector<ScanLayout>& layouts) {
  if (layouts.empty()) throw std::invalid_argument("tokenize: need at least one layout");
  const Shape& s = f_ms->value.shape();
  if (s.size() != 4) throw std::invalid_argument("tokenize: features must be [B,C,H,W]");
  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  const bool dual = layouts[0].modalities == 2;
  if (dual && (!f_p || f_p->value.shape() != s))
    throw std::invalid_argument("tokenize: modality shapes must match");
  if (!dual && f_p) throw std::invalid_argument("tokenize: single-modality layout takes one input");

  NodePtr<T> source = reshape(f_ms, {B, C, H * W});
  if (dual) source = concat<T>({source, reshape(f_p, {B, C, H * W})}, 2);

  std::vector<NodePtr<T>> per_dir;
  per_dir.reserve(layouts.size());
  for (const ScanLayout& lo : layouts) {
    if (lo.height != int(H) || lo.width != int(W) || (lo.modalities == 2) != dual)
      throw std::invalid_argument("tokenize: layout does not match feature extents");
    auto seq = permute_gather(source, 2, detail::interleave_map(lo));
    per_dir.push_back(reshape(seq, {B, std::size_t(1), C, lo.seq_len()}));
  }
  return per_dir.size() == 1 ? per_dir[0] : concat<T>(per_dir, 1);
}

template <typename T>
std::vector<NodePtr<T>> split_directions(const NodePtr<T>& s_int) {
  const Shape& s = s_int->value.shape();
  if (s.size() != 4) throw std::invalid_argument("split: expected [B,D,C,L]");
  std::vector<NodePtr<T>> out;
  out.reserve(s[1]);
  for (std::size_t d = 0; d < s[1]; ++d)
    out.push_back(reshape(slice_axis(s_int, 1, d, 1), {s[0], s[2], s[3]}));
  return out;
}

// Inverse of the tokenize gather: recovers canonical per-modality maps from a
// sequence-ordered tensor. Second result is null for single-modality layouts.
template <typename T>
std::pair<NodePtr<T>, NodePtr<T>> de_interleave(const NodePtr<T>& seq, const ScanLayout& lo) {
  const Shape& s = seq->value.shape();
  if (s.size() != 3 || s[2] != lo.seq_len())
    throw std::invalid_argument("de_interleave: sequence length does not match layout");
  const std::size_t hw = lo.pixels();
  auto sos = detail::to_index(lo.seq_of_source);
  std::vector<std::int64_t> m0(sos.begin(), sos.begin() + hw);
  auto ms = gather_axis(seq, 2, m0);
  NodePtr<T> p;
  if (lo.modalities == 2) {
    std::vector<std::int64_t> m1(sos.begin() + hw, sos.end());
    p = gather_axis(seq, 2, m1);
  }
  return std::make_pair(ms, p);
}

template <typename T>
struct MiScanOut {
  NodePtr<T> ms;  // [B,C,HW]
  NodePtr<T> p;   // [B,C,HW], null in single-modality mode
};

// One directional scan: a single recurrence over the whole interleaved
// sequence, outputs pulled apart per modality in layout (rank) order.
template <typename T>
MiScanOut<T> mi_scan(const NodePtr<T>& seq, const ScanLayout& lo, const SsmParams<T>& ssm,
                     bool parallel = false) {
  const Shape& s = seq->value.shape();
  if (s.size() != 3 || s[2] != lo.seq_len())
    throw std::invalid_argument("mi_scan: sequence length does not match layout");
  auto y = ssm_scan(seq, ssm, parallel);
  MiScanOut<T> out;
  out.ms = gather_axis(y, 2, detail::to_index(lo.pos_m0));
  if (lo.modalities == 2) out.p = gather_axis(y, 2, detail::to_index(lo.pos_m1));
  return out;
}

// De-permutes every direction's outputs to canonical row-major order and sums
// them elementwise per modality.
template <typename T>
MiScanOut<T> directional_sum(const std::vector<MiScanOut<T>>& outs,
                             const std::vector<ScanLayout>& layouts) {
  if (outs.size() != layouts.size() || outs.empty())
    throw std::invalid_argument("directional_sum: one output pair per layout");
  MiScanOut<T> acc;
  for (std::size_t d = 0; d < outs.size(); ++d) {
    auto ms = permute_gather(outs[d].ms, 2, detail::inverse_order(layouts[d].order_m0));
    acc.ms = acc.ms ? add(acc.ms, ms) : ms;
    if (layouts[d].modalities == 2) {
      auto p = permute_gather(outs[d].p, 2, detail::inverse_order(layouts[d].order_m1));
      acc.p = acc.p ? add(acc.p, p) : p;
    }
  }
  return acc;
}

// Full pipeline: tokenize -> split -> per-direction scan -> de-permuted sum.
// Results are canonical [B,C,HW] maps.
template <typename T>
MiScanOut<T> mi_ssm_forward(const NodePtr<T>& f_ms, const NodePtr<T>& f_p,
                            const std::vector<ScanLayout>& layouts,
                            const std::vector<SsmParams<T>>& params, bool parallel = false) {
  if (layouts.size() != params.size())
    throw std::invalid_argument("mi_ssm: one parameter group per direction");
  auto s_int = tokenize_interleave(f_ms, f_p, layouts);
  auto seqs = split_directions(s_int);
  std::vector<MiScanOut<T>> outs;
  outs.reserve(seqs.size());
  for (std::size_t d = 0; d < seqs.size(); ++d)
    outs.push_back(mi_scan(seqs[d], layouts[d], params[d], parallel));
  return directional_sum(outs, layouts);
}

}  // namespace mipan

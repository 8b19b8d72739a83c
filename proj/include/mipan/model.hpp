#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mipan/autograd.hpp"
#include "mipan/layout.hpp"
#include "mipan/mi_ssm.hpp"
#include "mipan/nn.hpp"
#include "mipan/ops.hpp"
#include "mipan/scan.hpp"

namespace mipan {

enum class Variant { full, channel_concat, sequential_concat, one_way, global_window };
enum class ModalityMode { dual, ms_only };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::channel_concat: return "channel_concat";
    case Variant::sequential_concat: return "sequential_concat";
    case Variant::one_way: return "one_way";
    case Variant::global_window: return "global_window";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::full, Variant::channel_concat, Variant::sequential_concat,
                    Variant::one_way, Variant::global_window})
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant: " + s);
}

struct ModelConfig {
  std::size_t bands = 4;
  std::size_t width = 16;   // feature channels C
  std::size_t blocks = 2;
  std::size_t state_dim = 8;
  std::size_t patch = 4;
  std::size_t ratio = 4;    // fixed resolution ratio
  Variant variant = Variant::full;
  ModalityMode mode = ModalityMode::dual;

  void validate() const {
    if (ratio != 4) throw std::invalid_argument("config: resolution ratio is fixed at 4");
    if (blocks < 1) throw std::invalid_argument("config: need at least one block");
    if (width < 4 || width % 2) throw std::invalid_argument("config: width must be even and >= 4");
    if (bands < 1 || state_dim < 1 || patch < 1) throw std::invalid_argument("config: bad extents");
    if (mode == ModalityMode::ms_only &&
        (variant == Variant::channel_concat || variant == Variant::global_window))
      throw std::invalid_argument("config: this variant needs both modalities");
  }
};

// Named parameter registry; iteration order is insertion order and defines the
// checkpoint layout.
template <typename T>
struct ParamSet {
  std::vector<std::pair<std::string, NodePtr<T>>> items;

  NodePtr<T> add(const std::string& name, Tensor<T> init) {
    auto node = make_param(std::move(init));
    add_node(name, node);
    return node;
  }
  void add_node(const std::string& name, const NodePtr<T>& node) {
    if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
    items.emplace_back(name, node);
  }
  NodePtr<T> find(const std::string& name) const {
    for (const auto& [n, p] : items)
      if (n == name) return p;
    return nullptr;
  }
  std::vector<NodePtr<T>> nodes() const {
    std::vector<NodePtr<T>> out;
    out.reserve(items.size());
    for (const auto& [n, p] : items) out.push_back(p);
    return out;
  }
  std::size_t count() const {
    std::size_t c = 0;
    for (const auto& [n, p] : items) c += p->value.size();
    return c;
  }
};

namespace detail {

template <typename T>
Tensor<T> kaiming_uniform(Shape s, std::size_t fan_in, std::mt19937_64& g) {
  const double bound = std::sqrt(1.0 / double(fan_in));
  std::uniform_real_distribution<double> u{-bound, bound};
  Tensor<T> t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(u(g));
  return t;
}

}  // namespace detail

// Two-unit gated convolutional encoder: each unit is a 3x3 conv whose output
// splits into content and gate halves, content (.) sigmoid(gate), then a 3x3
// conv restoring the full width.
template <typename T>
struct GatedEncoder {
  NodePtr<T> pre_w[2], pre_b[2], post_w[2], post_b[2];

  void init(ParamSet<T>& ps, const std::string& prefix, std::size_t in_ch, std::size_t C,
            std::mt19937_64& g) {
    for (int u = 0; u < 2; ++u) {
      const std::size_t cin = u == 0 ? in_ch : C;
      const std::string p = prefix + ".u" + std::to_string(u);
      pre_w[u] = ps.add(p + ".pre.w", detail::kaiming_uniform<T>({C, cin, 3, 3}, cin * 9, g));
      pre_b[u] = ps.add(p + ".pre.b", detail::kaiming_uniform<T>({C}, cin * 9, g));
      post_w[u] =
          ps.add(p + ".post.w", detail::kaiming_uniform<T>({C, C / 2, 3, 3}, (C / 2) * 9, g));
      post_b[u] = ps.add(p + ".post.b", detail::kaiming_uniform<T>({C}, (C / 2) * 9, g));
    }
  }

  NodePtr<T> apply(const NodePtr<T>& x) const {
    NodePtr<T> h = x;
    for (int u = 0; u < 2; ++u) {
      auto y = conv2d(h, pre_w[u], pre_b[u], 1, 1, 1);
      const std::size_t C = y->value.extent(1);
      auto content = slice_axis(y, 1, 0, C / 2);
      auto gate = slice_axis(y, 1, C / 2, C / 2);
      h = conv2d(mul(content, sigmoid(gate)), post_w[u], post_b[u], 1, 1, 1);
    }
    return h;
  }
};

template <typename T>
struct BlockBranchParams {
  NodePtr<T> ln_in_g, ln_in_b;
  NodePtr<T> proj_in_w, proj_in_b;
  NodePtr<T> dw_w, dw_b;
  NodePtr<T> ln_scan_g, ln_scan_b;
  NodePtr<T> proj_out_w, proj_out_b;

  void init(ParamSet<T>& ps, const std::string& prefix, std::size_t C, std::mt19937_64& g) {
    Tensor<T> ones({C});
    ones.fill(T(1));
    ln_in_g = ps.add(prefix + ".ln_in.g", Tensor<T>(ones));
    ln_in_b = ps.add(prefix + ".ln_in.b", Tensor<T>({C}));
    proj_in_w = ps.add(prefix + ".proj_in.w", detail::kaiming_uniform<T>({C, C}, C, g));
    proj_in_b = ps.add(prefix + ".proj_in.b", detail::kaiming_uniform<T>({C}, C, g));
    dw_w = ps.add(prefix + ".dw.w", detail::kaiming_uniform<T>({C, 1, 3, 3}, 9, g));
    dw_b = ps.add(prefix + ".dw.b", detail::kaiming_uniform<T>({C}, 9, g));
    ln_scan_g = ps.add(prefix + ".ln_scan.g", Tensor<T>(ones));
    ln_scan_b = ps.add(prefix + ".ln_scan.b", Tensor<T>({C}));
    proj_out_w = ps.add(prefix + ".proj_out.w", detail::kaiming_uniform<T>({C, C}, C, g));
    proj_out_b = ps.add(prefix + ".proj_out.b", detail::kaiming_uniform<T>({C}, C, g));
  }
};

template <typename T>
struct BlockParams {
  BlockBranchParams<T> ms, p;
  std::vector<SsmParams<T>> ssm;           // one group per direction
  NodePtr<T> cat_ms_w, cat_ms_b, cat_p_w, cat_p_b;  // channel-concat variant only
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 g(seed);
    const std::size_t C = cfg_.width;

    enc_ms_.init(params_, "enc.ms", cfg_.bands, C, g);
    enc_p_.init(params_, "enc.p", 1, C, g);

    const std::size_t dirs = cfg_.variant == Variant::one_way ? 1 : 4;
    blocks_.resize(cfg_.blocks);
    for (std::size_t i = 0; i < cfg_.blocks; ++i) {
      const std::string bp = "blk" + std::to_string(i);
      BlockParams<T>& blk = blocks_[i];
      blk.ms.init(params_, bp + ".ms", C, g);
      blk.p.init(params_, bp + ".p", C, g);
      for (std::size_t d = 0; d < dirs; ++d) {
        auto sp = make_ssm_params<T>(C, cfg_.state_dim, g);
        const std::string dp = bp + ".dir" + std::to_string(d);
        params_.add_node(dp + ".a_log", sp.a_log);
        params_.add_node(dp + ".d_skip", sp.d_skip);
        params_.add_node(dp + ".w_delta", sp.w_delta);
        params_.add_node(dp + ".b_delta", sp.b_delta);
        params_.add_node(dp + ".w_b", sp.w_b);
        params_.add_node(dp + ".w_c", sp.w_c);
        blk.ssm.push_back(std::move(sp));
      }
      if (cfg_.variant == Variant::channel_concat) {
        blk.cat_ms_w =
            params_.add(bp + ".cat.ms.w", detail::kaiming_uniform<T>({C, 2 * C, 1, 1}, 2 * C, g));
        blk.cat_ms_b = params_.add(bp + ".cat.ms.b", detail::kaiming_uniform<T>({C}, 2 * C, g));
        blk.cat_p_w =
            params_.add(bp + ".cat.p.w", detail::kaiming_uniform<T>({C, 2 * C, 1, 1}, 2 * C, g));
        blk.cat_p_b = params_.add(bp + ".cat.p.b", detail::kaiming_uniform<T>({C}, 2 * C, g));
      }
    }

    dec_w0_ = params_.add("dec.0.w", detail::kaiming_uniform<T>({C, C, 3, 3}, C * 9, g));
    dec_b0_ = params_.add("dec.0.b", detail::kaiming_uniform<T>({C}, C * 9, g));
    // zero final layer: the network starts as the identity residual
    dec_w1_ = params_.add("dec.1.w", Tensor<T>({cfg_.bands, C, 3, 3}));
    dec_b1_ = params_.add("dec.1.b", Tensor<T>({cfg_.bands}));
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  std::vector<BlockParams<T>>& blocks() { return blocks_; }
  std::size_t count_params() const { return params_.count(); }

  struct ForwardOut {
    NodePtr<T> hms;       // [B,Cb,H,W]
    NodePtr<T> f_ms;      // pre-decoder features [B,C,H,W]
    Tensor<T> upsampled;  // bicubic baseline the residual rides on
  };

  // lms: [B,Cb,H/4,W/4]; pan: [B,1,H,W] (null in ms-only mode)
  ForwardOut forward(const Tensor<T>& lms, const Tensor<T>* pan, bool parallel_scan = false) {
    const Shape& sl = lms.shape();
    if (sl.size() != 4 || sl[1] != cfg_.bands)
      throw std::invalid_argument("forward: lms must be [B," + std::to_string(cfg_.bands) +
                                  ",h,w], got " + shape_str(sl));
    const bool dual = cfg_.mode == ModalityMode::dual;
    if (dual && !pan) throw std::invalid_argument("forward: dual mode needs the second modality");
    if (!dual && pan) throw std::invalid_argument("forward: ms-only mode takes no second modality");
    const std::size_t B = sl[0], H = sl[2] * cfg_.ratio, W = sl[3] * cfg_.ratio;
    if (pan && pan->shape() != Shape({B, 1, H, W}))
      throw std::invalid_argument("forward: second modality must be [B,1," + std::to_string(H) +
                                  "," + std::to_string(W) + "], got " + shape_str(pan->shape()));

    Tensor<T> up = upsample(lms, cfg_.ratio, Resample::bicubic);
    auto up_node = make_constant(up);

    NodePtr<T> f_ms = enc_ms_.apply(up_node);
    NodePtr<T> f_p = dual ? enc_p_.apply(make_constant(*pan)) : nullptr;

    const auto& layouts = layouts_for(H, W);
    for (BlockParams<T>& blk : blocks_) {
      auto [o_ms, o_p] = block_forward(blk, f_ms, f_p, layouts, parallel_scan);
      f_ms = o_ms;
      f_p = o_p;
    }

    auto dec = conv2d(silu(conv2d(f_ms, dec_w0_, dec_b0_, 1, 1, 1)), dec_w1_, dec_b1_, 1, 1, 1);
    auto hms = add(dec, up_node);
    return {hms, f_ms, std::move(up)};
  }

  // Per-modality path: x -> LN -> Linear -> DWConv -> SiLU -> scan ->
  // LN(scan) (.) SiLU(f_ln) -> Linear -> + x
  std::pair<NodePtr<T>, NodePtr<T>> block_forward(BlockParams<T>& blk, const NodePtr<T>& x_ms,
                                                  const NodePtr<T>& x_p,
                                                  const std::vector<ScanLayout>& layouts,
                                                  bool parallel_scan = false) {
    const Shape& s = x_ms->value.shape();
    const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
    const bool dual = x_p != nullptr;

    auto f_ln_ms = linear_channels(layer_norm(x_ms, blk.ms.ln_in_g, blk.ms.ln_in_b),
                                   blk.ms.proj_in_w, blk.ms.proj_in_b);
    auto f_silu_ms = silu(dwconv(f_ln_ms, blk.ms.dw_w, blk.ms.dw_b));
    NodePtr<T> f_ln_p, f_silu_p;
    if (dual) {
      f_ln_p = linear_channels(layer_norm(x_p, blk.p.ln_in_g, blk.p.ln_in_b), blk.p.proj_in_w,
                               blk.p.proj_in_b);
      f_silu_p = silu(dwconv(f_ln_p, blk.p.dw_w, blk.p.dw_b));
    }

    MiScanOut<T> mi;
    if (cfg_.variant == Variant::channel_concat) {
      // layouts are single-modality here; cross-modal mixing happens in the
      // 1x1 convs instead of the scan order
      auto cat = concat<T>({f_silu_ms, f_silu_p}, 1);
      auto g_ms = conv2d(cat, blk.cat_ms_w, blk.cat_ms_b);
      auto g_p = conv2d(cat, blk.cat_p_w, blk.cat_p_b);
      mi.ms = mi_ssm_forward<T>(g_ms, nullptr, layouts, blk.ssm, parallel_scan).ms;
      mi.p = mi_ssm_forward<T>(g_p, nullptr, layouts, blk.ssm, parallel_scan).ms;
    } else {
      mi = mi_ssm_forward<T>(f_silu_ms, dual ? f_silu_p : nullptr, layouts, blk.ssm,
                             parallel_scan);
    }

    auto branch_out = [&](const NodePtr<T>& scan_out, const NodePtr<T>& f_ln,
                          const BlockBranchParams<T>& bp, const NodePtr<T>& x) {
      auto gated = mul(layer_norm(scan_out, bp.ln_scan_g, bp.ln_scan_b),
                       silu(reshape(f_ln, {B, C, H * W})));
      auto proj = linear_channels(gated, bp.proj_out_w, bp.proj_out_b);
      return add(reshape(proj, {B, C, H, W}), x);
    };
    auto o_ms = branch_out(mi.ms, f_ln_ms, blk.ms, x_ms);
    NodePtr<T> o_p = dual ? branch_out(mi.p, f_ln_p, blk.p, x_p) : nullptr;
    return {o_ms, o_p};
  }

  const std::vector<ScanLayout>& layouts_for(std::size_t H, std::size_t W) {
    const std::uint64_t key = (std::uint64_t(H) << 32) | W;
    auto it = layout_cache_.find(key);
    if (it != layout_cache_.end()) return it->second;
    std::vector<ScanLayout> ls;
    const int h = int(H), w = int(W), sp = int(cfg_.patch);
    const bool solo = cfg_.mode == ModalityMode::ms_only;
    auto dirs = {Direction::ltr_utd, Direction::utd_ltr, Direction::rtl_dtu, Direction::dtu_rtl};
    switch (cfg_.variant) {
      case Variant::full:
        for (auto d : dirs)
          ls.push_back(solo ? single_modality_layout(h, w, sp, d) : build_layout(h, w, sp, d));
        break;
      case Variant::channel_concat:
        for (auto d : dirs) ls.push_back(single_modality_layout(h, w, sp, d));
        break;
      case Variant::sequential_concat:
        for (auto d : dirs)
          ls.push_back(solo ? single_modality_layout(h, w, sp, d)
                            : sequential_concat_layout(h, w, sp, d));
        break;
      case Variant::one_way:
        ls.push_back(solo ? single_modality_layout(h, w, sp, Direction::ltr_utd)
                          : build_layout(h, w, sp, Direction::ltr_utd));
        break;
      case Variant::global_window:
        for (auto d : dirs) ls.push_back(global_window_layout(h, w, d));
        break;
    }
    return layout_cache_.emplace(key, std::move(ls)).first->second;
  }

 private:
  ModelConfig cfg_;
  ParamSet<T> params_;
  GatedEncoder<T> enc_ms_, enc_p_;
  std::vector<BlockParams<T>> blocks_;
  NodePtr<T> dec_w0_, dec_b0_, dec_w1_, dec_b1_;
  std::map<std::uint64_t, std::vector<ScanLayout>> layout_cache_;
};

}  // namespace mipan

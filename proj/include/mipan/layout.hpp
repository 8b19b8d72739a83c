#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mipan {

// Scan directions for the four-way traversal. The first two are built
// directly; the last two are defined as exact full-sequence reversals of
// their partners (rtl_dtu of ltr_utd, dtu_rtl of utd_ltr).
enum class Direction { ltr_utd = 0, utd_ltr = 1, rtl_dtu = 2, dtu_rtl = 3 };

const char* direction_name(Direction d);

// Token ordering for one direction over an H x W grid: which (modality,
// pixel) pair sits at each sequence slot. Pixels use canonical row-major
// flat indices p = r*W + c regardless of direction.
struct ScanLayout {
  Direction dir = Direction::ltr_utd;
  int height = 0, width = 0;
  int patch_h = 0, patch_w = 0;
  int modalities = 2;  // 2 = interleaved dual stream, 1 = single stream

  std::vector<std::int32_t> src_modality;   // [L] modality of each slot
  std::vector<std::int32_t> src_spatial;    // [L] canonical pixel of each slot
  std::vector<std::int32_t> seq_of_source;  // [modalities*HW]: m*HW + p -> slot
  // per-modality views: k-th token of modality m in sequence order
  std::vector<std::int32_t> order_m0, order_m1;  // rank -> canonical pixel
  std::vector<std::int32_t> pos_m0, pos_m1;      // rank -> sequence slot

  std::size_t seq_len() const { return src_modality.size(); }
  std::size_t pixels() const { return std::size_t(height) * std::size_t(width); }
};

// Patch-wise interleaved layout: patches traversed in direction order, and
// for each patch the window of modality-0 tokens precedes the window of
// modality-1 tokens (reversed wholesale for the two reversal directions).
ScanLayout build_layout(int height, int width, int patch, Direction dir);

// Same traversal with only one modality present; L = HW.
ScanLayout single_modality_layout(int height, int width, int patch, Direction dir);

// All modality-0 tokens (direction order), then all modality-1 tokens.
ScanLayout sequential_concat_layout(int height, int width, int patch, Direction dir);

// Alternation unit is the whole image: one window per modality, raster
// token order, no patch structure.
ScanLayout global_window_layout(int height, int width, Direction dir);

std::array<ScanLayout, 4> all_directions(int height, int width, int patch,
                                         ScanLayout (*builder)(int, int, int, Direction));

}  // namespace mipan

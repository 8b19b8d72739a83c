#include "mipan/layout.hpp"

#include <algorithm>
#include <stdexcept>

namespace mipan {

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::ltr_utd: return "ltr_utd";
    case Direction::utd_ltr: return "utd_ltr";
    case Direction::rtl_dtu: return "rtl_dtu";
    case Direction::dtu_rtl: return "dtu_rtl";
  }
  return "?";
}

namespace {

void check_dims(int h, int w, int patch) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("layout: image extents must be positive");
  if (patch <= 0) throw std::invalid_argument("layout: patch must be positive");
  if (h % patch != 0 || w % patch != 0)
    throw std::invalid_argument("layout: patch " + std::to_string(patch) + " does not divide " +
                                std::to_string(h) + "x" + std::to_string(w));
}

// Pixels of one direction's traversal, grouped patch by patch.
// row_first: row-major over the patch grid and within patches (ltr_utd);
// otherwise column-major (utd_ltr).
std::vector<std::vector<std::int32_t>> patch_orders(int h, int w, int ph, int pw, bool row_first) {
  const int gh = h / ph, gw = w / pw;
  std::vector<std::vector<std::int32_t>> patches;
  patches.reserve(std::size_t(gh) * gw);
  auto patch_pixels = [&](int gr, int gc) {
    std::vector<std::int32_t> px;
    px.reserve(std::size_t(ph) * pw);
    if (row_first) {
      for (int ir = 0; ir < ph; ++ir)
        for (int ic = 0; ic < pw; ++ic) px.push_back((gr * ph + ir) * w + (gc * pw + ic));
    } else {
      for (int ic = 0; ic < pw; ++ic)
        for (int ir = 0; ir < ph; ++ir) px.push_back((gr * ph + ir) * w + (gc * pw + ic));
    }
    return px;
  };
  if (row_first) {
    for (int gr = 0; gr < gh; ++gr)
      for (int gc = 0; gc < gw; ++gc) patches.push_back(patch_pixels(gr, gc));
  } else {
    for (int gc = 0; gc < gw; ++gc)
      for (int gr = 0; gr < gh; ++gr) patches.push_back(patch_pixels(gr, gc));
  }
  return patches;
}

void finalize(ScanLayout& l) {
  const std::size_t hw = l.pixels();
  const std::size_t L = l.src_modality.size();
  l.seq_of_source.assign(std::size_t(l.modalities) * hw, -1);
  l.order_m0.clear();
  l.order_m1.clear();
  l.pos_m0.clear();
  l.pos_m1.clear();
  for (std::size_t q = 0; q < L; ++q) {
    const std::int32_t m = l.src_modality[q];
    const std::int32_t p = l.src_spatial[q];
    const std::size_t key = std::size_t(m) * hw + std::size_t(p);
    if (l.seq_of_source[key] != -1) throw std::logic_error("layout: duplicate source slot");
    l.seq_of_source[key] = std::int32_t(q);
    if (m == 0) {
      l.order_m0.push_back(p);
      l.pos_m0.push_back(std::int32_t(q));
    } else {
      l.order_m1.push_back(p);
      l.pos_m1.push_back(std::int32_t(q));
    }
  }
  for (std::int32_t v : l.seq_of_source)
    if (v < 0) throw std::logic_error("layout: uncovered source slot");
}

void reverse_in_place(ScanLayout& l) {
  std::reverse(l.src_modality.begin(), l.src_modality.end());
  std::reverse(l.src_spatial.begin(), l.src_spatial.end());
  finalize(l);
}

ScanLayout forward_of(Direction dir, int h, int w, int ph, int pw, int modalities,
                      bool interleave_per_patch) {
  const bool row_first = (dir == Direction::ltr_utd || dir == Direction::rtl_dtu);
  auto patches = patch_orders(h, w, ph, pw, row_first);

  ScanLayout l;
  l.dir = dir;
  l.height = h;
  l.width = w;
  l.patch_h = ph;
  l.patch_w = pw;
  l.modalities = modalities;
  if (interleave_per_patch) {
    for (const auto& px : patches)
      for (int m = 0; m < modalities; ++m)
        for (std::int32_t p : px) {
          l.src_modality.push_back(m);
          l.src_spatial.push_back(p);
        }
  } else {
    for (int m = 0; m < modalities; ++m)
      for (const auto& px : patches)
        for (std::int32_t p : px) {
          l.src_modality.push_back(m);
          l.src_spatial.push_back(p);
        }
  }
  finalize(l);
  return l;
}

ScanLayout build_any(int h, int w, int ph, int pw, Direction dir, int modalities,
                     bool interleave_per_patch) {
  const bool reversed = (dir == Direction::rtl_dtu || dir == Direction::dtu_rtl);
  ScanLayout l = forward_of(dir, h, w, ph, pw, modalities, interleave_per_patch);
  if (reversed) reverse_in_place(l);
  return l;
}

}  // namespace

ScanLayout build_layout(int height, int width, int patch, Direction dir) {
  check_dims(height, width, patch);
  return build_any(height, width, patch, patch, dir, 2, /*interleave_per_patch=*/true);
}

ScanLayout single_modality_layout(int height, int width, int patch, Direction dir) {
  check_dims(height, width, patch);
  return build_any(height, width, patch, patch, dir, 1, /*interleave_per_patch=*/true);
}

ScanLayout sequential_concat_layout(int height, int width, int patch, Direction dir) {
  check_dims(height, width, patch);
  return build_any(height, width, patch, patch, dir, 2, /*interleave_per_patch=*/false);
}

ScanLayout global_window_layout(int height, int width, Direction dir) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("layout: image extents must be positive");
  // one patch spanning the image: the two windows cover HW tokens each
  return build_any(height, width, height, width, dir, 2, /*interleave_per_patch=*/true);
}

std::array<ScanLayout, 4> all_directions(int height, int width, int patch,
                                         ScanLayout (*builder)(int, int, int, Direction)) {
  return {builder(height, width, patch, Direction::ltr_utd),
          builder(height, width, patch, Direction::utd_ltr),
          builder(height, width, patch, Direction::rtl_dtu),
          builder(height, width, patch, Direction::dtu_rtl)};
}

}  // namespace mipan

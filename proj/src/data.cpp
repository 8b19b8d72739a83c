#include "mipan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "mipan/nn.hpp"

namespace mipan {

namespace {

// Shared spatial detail: one linear ramp, a handful of soft blobs, a handful
// of hard-edged rectangles.
void add_detail(std::vector<double>& d, std::size_t H, std::size_t W, std::mt19937_64& g,
                bool with_gradient, std::size_t n_blobs, std::size_t n_rects) {
  std::uniform_real_distribution<double> u01{0.0, 1.0};
  if (with_gradient) {
    const double gx = 2 * u01(g) - 1, gy = 2 * u01(g) - 1;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        d[y * W + x] += gx * double(x) / double(W - 1) + gy * double(y) / double(H - 1);
  }
  for (std::size_t b = 0; b < n_blobs; ++b) {
    const double cx = u01(g) * double(W - 1), cy = u01(g) * double(H - 1);
    const double sigma = (0.0625 + u01(g) * 0.14) * double(std::min(H, W));
    const double amp = (u01(g) < 0.5 ? -1.0 : 1.0) * (0.3 + 0.7 * u01(g));
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double dx = double(x) - cx, dy = double(y) - cy;
        d[y * W + x] += amp * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      }
  }
  for (std::size_t r = 0; r < n_rects; ++r) {
    std::size_t x0 = std::size_t(u01(g) * double(W - 2)), y0 = std::size_t(u01(g) * double(H - 2));
    std::size_t x1 = x0 + 1 + std::size_t(u01(g) * double(W - x0 - 1));
    std::size_t y1 = y0 + 1 + std::size_t(u01(g) * double(H - y0 - 1));
    const double amp = (u01(g) < 0.5 ? -1.0 : 1.0) * (0.2 + 0.6 * u01(g));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) d[y * W + x] += amp;
  }
}

}  // namespace

Tensor<double> synth_scene(std::uint64_t seed, std::size_t H, std::size_t W, std::size_t Cb) {
  if (H % 4 || W % 4 || H == 0 || W == 0)
    throw std::invalid_argument("synth_scene: extents must be positive multiples of 4");
  if (Cb == 0) throw std::invalid_argument("synth_scene: need at least one band");
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u01{0.0, 1.0};

  std::vector<double> d1(H * W, 0.0), d2(H * W, 0.0);
  add_detail(d1, H, W, g, true, 4 + std::size_t(u01(g) * 4), 3 + std::size_t(u01(g) * 3));
  add_detail(d2, H, W, g, false, 2, 1);

  Tensor<double> gt(Shape{Cb, H, W});
  for (std::size_t c = 0; c < Cb; ++c) {
    const double alpha = 0.5 + 0.5 * u01(g);
    const double gamma = 0.5 * u01(g) - 0.25;
    const double beta = 0.3 * u01(g);
    double* plane = gt.data() + c * H * W;
    for (std::size_t i = 0; i < H * W; ++i) plane[i] = alpha * d1[i] + gamma * d2[i] + beta;
  }

  double lo = gt[0], hi = gt[0];
  for (std::size_t i = 0; i < gt.size(); ++i) {
    lo = std::min(lo, gt[i]);
    hi = std::max(hi, gt[i]);
  }
  if (hi - lo < 1e-9) {
    gt.fill(0.5);
    return gt;
  }
  for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = (gt[i] - lo) / (hi - lo);
  return gt;
}

Tensor<double> wald_downsample(const Tensor<double>& hr) {
  const Shape& s = hr.shape();
  if (s.size() != 3) throw std::invalid_argument("wald_downsample: expected [C,H,W]");
  Tensor<double> hr4(Shape{1, s[0], s[1], s[2]});
  std::copy(hr.data(), hr.data() + hr.size(), hr4.data());
  Tensor<double> lo4 = decimate(gaussian_blur(hr4, 1.0, 7), 4, 0);
  Tensor<double> lo(Shape{s[0], s[1] / 4, s[2] / 4});
  std::copy(lo4.data(), lo4.data() + lo4.size(), lo.data());
  return lo;
}

std::pair<Tensor<double>, Tensor<double>> wald_degrade(const Tensor<double>& gt) {
  const Shape& s = gt.shape();
  if (s.size() != 3 || s[1] % 4 || s[2] % 4)
    throw std::invalid_argument("wald_degrade: expected [C,H,W] with extents divisible by 4");
  const std::size_t C = s[0], H = s[1], W = s[2];

  std::vector<double> mean(H * W, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = gt.data() + c * H * W;
    for (std::size_t i = 0; i < H * W; ++i) mean[i] += plane[i] / double(C);
  }
  Tensor<double> pan(Shape{1, H, W});
  auto at = [&](long y, long x) {
    y = std::clamp(y, 0L, long(H) - 1);
    x = std::clamp(x, 0L, long(W) - 1);
    return mean[std::size_t(y) * W + std::size_t(x)];
  };
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double lap = 4 * at(long(y), long(x)) - at(long(y) - 1, long(x)) -
                         at(long(y) + 1, long(x)) - at(long(y), long(x) - 1) -
                         at(long(y), long(x) + 1);
      pan[y * W + x] = std::clamp(mean[y * W + x] + 0.3 * lap, 0.0, 1.0);
    }
  return {std::move(pan), wald_downsample(gt)};
}

namespace {

std::string scene_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

DatasetManifest build_dataset(const std::string& out_dir, std::size_t n_scenes,
                              std::uint64_t seed, std::size_t H, std::size_t W, std::size_t Cb) {
  std::filesystem::create_directories(out_dir);
  DatasetManifest m;
  m.dir = out_dir;
  m.seed = seed;
  m.bands = Cb;
  m.height = H;
  m.width = W;

  std::ostringstream manifest;
  manifest << "seed = " << seed << "\n"
           << "bands = " << Cb << "\n"
           << "height = " << H << "\n"
           << "width = " << W << "\n";
  for (std::size_t i = 0; i < n_scenes; ++i) {
    const std::string id = scene_id(i);
    const std::string split = (i % 4 == 3) ? "test" : "train";
    Tensor<double> gt = synth_scene(seed + i, H, W, Cb);
    auto [pan, lms] = wald_degrade(gt);
    save_tensor(out_dir + "/" + id + "_gt.mmtf", gt);
    save_tensor(out_dir + "/" + id + "_pan.mmtf", pan);
    save_tensor(out_dir + "/" + id + "_lms.mmtf", lms);
    manifest << "scene = " << id << "," << split << "\n";
    m.scenes.push_back({id, split});
  }
  std::ofstream os(out_dir + "/manifest.txt");
  if (!os) throw std::runtime_error("build_dataset: cannot write manifest in " + out_dir);
  os << manifest.str();
  if (!os) throw std::runtime_error("build_dataset: manifest write failed");
  return m;
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.txt");
  if (!is) throw std::runtime_error("load_manifest: cannot open " + dir + "/manifest.txt");
  DatasetManifest m;
  m.dir = dir;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("load_manifest: malformed line " + std::to_string(lineno));
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "seed")
      m.seed = std::stoull(val);
    else if (key == "bands")
      m.bands = std::stoul(val);
    else if (key == "height")
      m.height = std::stoul(val);
    else if (key == "width")
      m.width = std::stoul(val);
    else if (key == "scene") {
      const auto comma = val.find(',');
      if (comma == std::string::npos)
        throw std::runtime_error("load_manifest: scene line needs id,split at line " +
                                 std::to_string(lineno));
      ManifestEntry e{trim(val.substr(0, comma)), trim(val.substr(comma + 1))};
      if (e.split != "train" && e.split != "test")
        throw std::runtime_error("load_manifest: unknown split " + e.split);
      for (const auto& prev : m.scenes)
        if (prev.id == e.id) throw std::runtime_error("load_manifest: duplicate id " + e.id);
      m.scenes.push_back(std::move(e));
    } else {
      throw std::runtime_error("load_manifest: unknown key " + key);
    }
  }
  return m;
}

Scene load_scene(const DatasetManifest& m, const std::string& id) {
  Scene s;
  s.id = id;
  s.gt = load_tensor<double>(m.dir + "/" + id + "_gt.mmtf");
  s.pan = load_tensor<double>(m.dir + "/" + id + "_pan.mmtf");
  s.lms = load_tensor<double>(m.dir + "/" + id + "_lms.mmtf");
  const Shape& g = s.gt.shape();
  if (g.size() != 3) throw std::runtime_error("load_scene: ground truth must be [C,H,W]");
  if (s.pan.shape() != Shape({1, g[1], g[2]}))
    throw std::runtime_error("load_scene: pan extents do not match " + id);
  if (s.lms.shape() != Shape({g[0], g[1] / 4, g[2] / 4}))
    throw std::runtime_error("load_scene: lms extents do not match " + id);
  return s;
}

}  // namespace mipan

#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mipan/serialize.hpp"
#include "mipan/tensor.hpp"

namespace mipan {

struct Scene {
  std::string id;
  Tensor<double> gt;   // [Cb,H,W], values in [0,1]
  Tensor<double> pan;  // [1,H,W]
  Tensor<double> lms;  // [Cb,H/4,W/4]
};

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::string dir;
  std::uint64_t seed = 0;
  std::size_t bands = 0, height = 0, width = 0;
  std::vector<ManifestEntry> scenes;
};

// Procedural ground truth: band-correlated gradients, Gaussian blobs, and
// sharp rectangles, globally normalized to [0,1]. Deterministic in the seed.
Tensor<double> synth_scene(std::uint64_t seed, std::size_t H, std::size_t W, std::size_t Cb);

// Reduced-resolution protocol: pan is the equal-weight band mean plus 30% of
// its Laplacian detail (clamped to [0,1]); lms is a Gaussian blur (sigma 1,
// kernel 7) followed by 4x decimation at offset 0.
std::pair<Tensor<double>, Tensor<double>> wald_degrade(const Tensor<double>& gt);

// The exact lms operator, exposed so consistency checks use one code path.
Tensor<double> wald_downsample(const Tensor<double>& hr);

inline constexpr std::uint16_t kTensorFileVersion = 1;

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  if (t.empty()) throw std::invalid_argument("save_tensor: refusing to write an empty tensor");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_tensor: cannot open " + path);
  os.write("MMTF", 4);
  detail::put_bytes(os, kTensorFileVersion, 2);
  detail::put_bytes(os, detail::dtype_code<T>(), 1);
  detail::put_bytes(os, t.shape().size(), 1);
  for (std::size_t e : t.shape()) detail::put_bytes(os, e, 8);
  for (std::size_t i = 0; i < t.size(); ++i) detail::put_scalar(os, t[i]);
  if (!os) throw std::runtime_error("save_tensor: write failed for " + path);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_tensor: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "MMTF", 4) != 0)
    throw std::runtime_error("load_tensor: bad magic in " + path);
  const auto version = detail::get_bytes(is, 2);
  if (version != kTensorFileVersion)
    throw std::runtime_error("load_tensor: unsupported version " + std::to_string(version));
  const auto dtype = detail::get_bytes(is, 1);
  if (dtype != detail::dtype_code<T>())
    throw std::runtime_error("load_tensor: dtype mismatch in " + path);
  const auto rank = detail::get_bytes(is, 1);
  Shape shape(rank);
  for (auto& e : shape) {
    e = detail::get_bytes(is, 8);
    if (e == 0) throw std::runtime_error("load_tensor: empty extent in " + path);
  }
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::get_scalar<T>(is);
  return t;
}

// Writes scene_%04d_{gt,pan,lms}.mmtf plus manifest.txt into out_dir. Every
// fourth scene is tagged test, the rest train.
DatasetManifest build_dataset(const std::string& out_dir, std::size_t n_scenes,
                              std::uint64_t seed, std::size_t H, std::size_t W, std::size_t Cb);

DatasetManifest load_manifest(const std::string& dir);

Scene load_scene(const DatasetManifest& m, const std::string& id);

}  // namespace mipan

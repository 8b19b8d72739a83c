#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mipan/model.hpp"
#include "mipan/serialize.hpp"
#include "mipan/tensor.hpp"

namespace mipan {

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ParamSet<T>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("MMCK", 4);
  detail::put_bytes(os, kCheckpointVersion, 2);
  detail::put_bytes(os, std::uint32_t(params.items.size()), 4);
  for (const auto& [name, node] : params.items) {
    const Tensor<T>& t = node->value;
    detail::put_bytes(os, std::uint16_t(name.size()), 2);
    os.write(name.data(), std::streamsize(name.size()));
    detail::put_bytes(os, detail::dtype_code<T>(), 1);
    detail::put_bytes(os, t.shape().size(), 1);
    for (std::size_t e : t.shape()) detail::put_bytes(os, e, 8);
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_scalar(os, t[i]);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Strict load: the file must carry exactly the parameters the set declares,
// with matching dtype and extents. Extra, missing, or reshaped tensors are
// errors rather than silent drift.
template <typename T>
void load_checkpoint(const std::string& path, ParamSet<T>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "MMCK", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::get_bytes(is, 2);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = detail::get_bytes(is, 4);
  if (count != params.items.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.items.size()) +
                             " tensors, file has " + std::to_string(count));
  std::vector<bool> seen(params.items.size(), false);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = detail::get_bytes(is, 2);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    if (std::size_t(is.gcount()) != name_len) throw std::runtime_error("checkpoint: truncated file");
    const auto dtype = detail::get_bytes(is, 1);
    if (dtype != detail::dtype_code<T>())
      throw std::runtime_error("checkpoint: dtype mismatch for " + name);
    const auto rank = detail::get_bytes(is, 1);
    Shape shape(rank);
    for (auto& e : shape) e = detail::get_bytes(is, 8);

    std::size_t idx = params.items.size();
    for (std::size_t i = 0; i < params.items.size(); ++i)
      if (params.items[i].first == name) { idx = i; break; }
    if (idx == params.items.size())
      throw std::runtime_error("checkpoint: unexpected tensor " + name);
    if (seen[idx]) throw std::runtime_error("checkpoint: duplicate tensor " + name);
    seen[idx] = true;
    Tensor<T>& dst = params.items[idx].second->value;
    if (shape != dst.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file " +
                               shape_str(shape) + " vs model " + shape_str(dst.shape()));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = detail::get_scalar<T>(is);
  }
}

}  // namespace mipan

#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mipan::detail {

inline void put_bytes(std::ostream& os, std::uint64_t v, int nbytes) {
  for (int i = 0; i < nbytes; ++i) os.put(char((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_bytes(std::istream& is, int nbytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < nbytes; ++i) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("serialize: truncated file");
    v |= std::uint64_t(std::uint8_t(c)) << (8 * i);
  }
  return v;
}

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  return sizeof(T) == 4 ? 0 : 1;
}

template <typename T>
void put_scalar(std::ostream& os, T x) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &x, sizeof(T));
  put_bytes(os, bits, int(sizeof(T)));
}

template <typename T>
T get_scalar(std::istream& is) {
  const std::uint64_t bits = get_bytes(is, int(sizeof(T)));
  if constexpr (sizeof(T) == 4) {
    const std::uint32_t b32 = std::uint32_t(bits);
    T x;
    std::memcpy(&x, &b32, 4);
    return x;
  } else {
    T x;
    std::memcpy(&x, &bits, 8);
    return x;
  }
}

}  // namespace mipan::detail

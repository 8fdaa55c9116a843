#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fastmra {

using Block8 = std::array<double, 64>;
using Levels8 = std::array<int, 64>;

namespace detail {

struct DctBasis {
  std::array<double, 64> c{};  // c[k*8+n]
  DctBasis() {
    for (int k = 0; k < 8; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n)
        c[std::size_t(k * 8 + n)] = scale * std::cos((2 * n + 1) * k * std::numbers::pi / 16.0);
    }
  }
};

inline const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

}  // namespace detail

// Orthonormal 2-D type-II DCT, rows then columns.
inline Block8 dct8_forward(const Block8& in) {
  const auto& c = detail::dct_basis().c;
  Block8 tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int k = 0; k < 8; ++k) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += c[std::size_t(k * 8 + n)] * in[std::size_t(y * 8 + n)];
      tmp[std::size_t(y * 8 + k)] = s;
    }
  for (int x = 0; x < 8; ++x)
    for (int k = 0; k < 8; ++k) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += c[std::size_t(k * 8 + n)] * tmp[std::size_t(n * 8 + x)];
      out[std::size_t(k * 8 + x)] = s;
    }
  return out;
}

inline Block8 dct8_inverse(const Block8& in) {
  const auto& c = detail::dct_basis().c;
  Block8 tmp{}, out{};
  for (int x = 0; x < 8; ++x)
    for (int n = 0; n < 8; ++n) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[std::size_t(k * 8 + n)] * in[std::size_t(k * 8 + x)];
      tmp[std::size_t(n * 8 + x)] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int n = 0; n < 8; ++n) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[std::size_t(k * 8 + n)] * tmp[std::size_t(y * 8 + k)];
      out[std::size_t(y * 8 + n)] = s;
    }
  return out;
}

// Sixteen 8-point passes per direction at 64 MACs each.
inline constexpr std::uint64_t kDct8x8Macs = 16 * 64;

inline int round_half_away(double v) {
  return v >= 0.0 ? static_cast<int>(std::floor(v + 0.5)) : -static_cast<int>(std::floor(-v + 0.5));
}

inline Levels8 quantize(const Block8& coeffs, int q) {
  Levels8 out{};
  for (std::size_t i = 0; i < 64; ++i) out[i] = round_half_away(coeffs[i] / q);
  return out;
}

inline Block8 dequantize(const Levels8& levels, int q) {
  Block8 out{};
  for (std::size_t i = 0; i < 64; ++i) out[i] = double(levels[i]) * q;
  return out;
}

inline constexpr std::array<int, 64> kZigZag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

}  // namespace fastmra

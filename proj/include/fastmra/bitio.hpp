#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "error.hpp"

namespace fastmra {

// MSB-first bit writer.
class BitWriter {
 public:
  void put_bit(bool b) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (b) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
  }

  void put_bits(std::uint64_t value, int n) {
    for (int i = n - 1; i >= 0; --i) put_bit((value >> i) & 1u);
  }

  // Unsigned exp-Golomb: 0 -> "1", 1 -> "010", 2 -> "011", ...
  void put_ue(std::uint32_t v) {
    const std::uint64_t x = std::uint64_t(v) + 1;
    int len = 0;
    while ((x >> len) > 1) ++len;
    put_bits(0, len);
    put_bits(x, len + 1);
  }

  // Signed exp-Golomb with the usual mapping k>0 -> 2k-1, k<=0 -> -2k.
  void put_se(std::int32_t v) {
    put_ue(v > 0 ? static_cast<std::uint32_t>(2 * std::int64_t(v) - 1)
                 : static_cast<std::uint32_t>(-2 * std::int64_t(v)));
  }

  void append(const BitWriter& other) {
    for (std::size_t i = 0; i < other.bits_; ++i)
      put_bit((other.bytes_[i / 8] >> (7 - i % 8)) & 1u);
  }

  void align() {
    while (bits_ % 8 != 0) put_bit(false);
  }

  std::size_t bit_count() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

inline std::size_t ue_length(std::uint32_t v) {
  const std::uint64_t x = std::uint64_t(v) + 1;
  std::size_t len = 0;
  while ((x >> len) > 1) ++len;
  return 2 * len + 1;
}

inline std::size_t se_length(std::int32_t v) {
  return ue_length(v > 0 ? static_cast<std::uint32_t>(2 * std::int64_t(v) - 1)
                         : static_cast<std::uint32_t>(-2 * std::int64_t(v)));
}

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes)
      : bytes_(bytes), limit_(bytes.size() * 8) {}
  BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_limit)
      : bytes_(bytes), limit_(std::min(bit_limit, bytes.size() * 8)) {}

  bool get_bit() {
    if (pos_ >= limit_) throw DecodeError("bitstream overrun");
    const bool b = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return b;
  }

  std::uint64_t get_bits(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | static_cast<std::uint64_t>(get_bit());
    return v;
  }

  std::uint32_t get_ue() {
    int zeros = 0;
    while (!get_bit()) {
      if (++zeros > 32) throw DecodeError("exp-Golomb prefix too long");
    }
    const std::uint64_t x = (std::uint64_t(1) << zeros) | get_bits(zeros);
    return static_cast<std::uint32_t>(x - 1);
  }

  std::int32_t get_se() {
    const std::uint32_t k = get_ue();
    return (k & 1u) ? static_cast<std::int32_t>((std::int64_t(k) + 1) / 2)
                    : static_cast<std::int32_t>(-std::int64_t(k) / 2);
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return limit_ - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace fastmra

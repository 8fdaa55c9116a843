#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "hash.hpp"

namespace fastmra {

// One 8-bit sample plane, row-major without padding.
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height),
        samples_(checked_size(width, height), fill) {}
  Plane(int width, int height, std::vector<std::uint8_t> samples)
      : width_(width), height_(height), samples_(std::move(samples)) {
    if (samples_.size() != checked_size(width, height))
      throw PreconditionError("plane sample count does not match " +
                              std::to_string(width) + "x" + std::to_string(height));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return samples_.size(); }

  std::uint8_t at(int x, int y) const { return samples_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return samples_[index(x, y)]; }

  // Border-replicating fetch.
  std::uint8_t clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return samples_[index(x, y)];
  }

  const std::uint8_t* row(int y) const { return samples_.data() + index(0, y); }
  std::uint8_t* row(int y) { return samples_.data() + index(0, y); }

  std::span<const std::uint8_t> samples() const { return samples_; }
  std::span<std::uint8_t> samples() { return samples_; }

  bool operator==(const Plane&) const = default;

 private:
  static std::size_t checked_size(int w, int h) {
    if (w <= 0 || h <= 0)
      throw PreconditionError("plane dimensions must be positive");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> samples_;
};

enum class PlaneId { Y = 0, U = 1, V = 2 };

// Planar 8-bit 4:2:0 picture. Dimensions must be positive and even so the
// chroma planes are exactly half size; block alignment (multiples of 16) is
// a property of coded sequences, checked by `is_block_aligned`, because
// motion search also runs on downsampled copies.
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, std::uint8_t y = 0, std::uint8_t u = 128,
        std::uint8_t v = 128)
      : Frame(Plane(width, height, y), Plane(half(width), half(height), u),
              Plane(half(width), half(height), v)) {}
  Frame(Plane y, Plane u, Plane v)
      : planes_{std::move(y), std::move(u), std::move(v)} {
    const int w = planes_[0].width();
    const int h = planes_[0].height();
    if (w % 2 != 0 || h % 2 != 0)
      throw PreconditionError("4:2:0 frames need even dimensions, got " +
                              std::to_string(w) + "x" + std::to_string(h));
    for (int p = 1; p < 3; ++p)
      if (planes_[p].width() != w / 2 || planes_[p].height() != h / 2)
        throw PreconditionError("chroma plane size does not match luma");
  }

  int width() const { return planes_[0].width(); }
  int height() const { return planes_[0].height(); }
  bool empty() const { return planes_[0].size() == 0; }
  bool is_block_aligned() const {
    return width() > 0 && height() > 0 && width() % 16 == 0 && height() % 16 == 0;
  }

  const Plane& plane(PlaneId id) const { return planes_[static_cast<int>(id)]; }
  Plane& plane(PlaneId id) { return planes_[static_cast<int>(id)]; }
  const Plane& plane(int i) const { return planes_[i]; }
  Plane& plane(int i) { return planes_[i]; }
  const Plane& y() const { return planes_[0]; }
  const Plane& u() const { return planes_[1]; }
  const Plane& v() const { return planes_[2]; }
  Plane& y() { return planes_[0]; }

  std::size_t sample_count() const {
    return planes_[0].size() + planes_[1].size() + planes_[2].size();
  }

  bool operator==(const Frame&) const = default;

 private:
  static int half(int v) { return v / 2; }
  std::array<Plane, 3> planes_;
};

inline bool same_dimensions(const Frame& a, const Frame& b) {
  return a.width() == b.width() && a.height() == b.height();
}

struct Sequence {
  std::vector<Frame> frames;
  double frame_rate = 30.0;

  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  std::size_t size() const { return frames.size(); }

  void validate() const {
    if (frames.empty()) throw PreconditionError("sequence has no frames");
    for (const auto& f : frames)
      if (!same_dimensions(f, frames.front()))
        throw PreconditionError("sequence frames differ in size");
  }

  bool operator==(const Sequence&) const = default;
};

inline std::uint32_t frame_checksum(const Frame& f) {
  Fnv1a32 h;
  for (int p = 0; p < 3; ++p) h.update(f.plane(p).samples());
  return h.digest();
}

inline std::uint64_t frames_digest(std::span<const Frame* const> frames) {
  Fnv1a64 h;
  for (const Frame* f : frames)
    for (int p = 0; p < 3; ++p) h.update(f->plane(p).samples());
  return h.digest();
}

inline std::uint64_t plane_sse(const Plane& a, const Plane& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw PreconditionError("plane dimension mismatch");
  std::uint64_t sse = 0;
  auto sa = a.samples();
  auto sb = b.samples();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const int d = int(sa[i]) - int(sb[i]);
    sse += static_cast<std::uint64_t>(d * d);
  }
  return sse;
}

// Sum of squared errors over Y, U and V at native resolution.
inline std::uint64_t frame_sse(const Frame& a, const Frame& b) {
  if (!same_dimensions(a, b)) throw PreconditionError("frame dimension mismatch");
  return plane_sse(a.y(), b.y()) + plane_sse(a.u(), b.u()) + plane_sse(a.v(), b.v());
}

struct Psnr {
  double y = 0, u = 0, v = 0;
  double combined = 0;  // from 4:1:1 sample-weighted MSE
};

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

inline double psnr_from_mse(double mse) {
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline Psnr psnr(const Frame& a, const Frame& b) {
  if (!same_dimensions(a, b)) throw PreconditionError("psnr: frame dimension mismatch");
  const double mse_y = double(plane_sse(a.y(), b.y())) / double(a.y().size());
  const double mse_u = double(plane_sse(a.u(), b.u())) / double(a.u().size());
  const double mse_v = double(plane_sse(a.v(), b.v())) / double(a.v().size());
  Psnr r;
  r.y = psnr_from_mse(mse_y);
  r.u = psnr_from_mse(mse_u);
  r.v = psnr_from_mse(mse_v);
  r.combined = psnr_from_mse((4.0 * mse_y + mse_u + mse_v) / 6.0);
  return r;
}

}  // namespace fastmra

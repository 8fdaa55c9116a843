#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "frame.hpp"
#include "rng.hpp"

namespace fastmra {

enum class MotionModel { GlobalTranslation, TwoRegionTranslation, StaticNoise };

inline std::string to_string(MotionModel m) {
  switch (m) {
    case MotionModel::GlobalTranslation: return "global_translation";
    case MotionModel::TwoRegionTranslation: return "two_region_translation";
    case MotionModel::StaticNoise: return "static_noise";
  }
  return "?";
}

inline MotionModel motion_model_from_string(const std::string& s) {
  if (s == "global_translation") return MotionModel::GlobalTranslation;
  if (s == "two_region_translation") return MotionModel::TwoRegionTranslation;
  if (s == "static_noise") return MotionModel::StaticNoise;
  throw PreconditionError("unknown motion model '" + s + "'");
}

inline constexpr double kMaxSyntheticVelocity = 8.0;
inline constexpr int kMinSyntheticFrames = 33;

struct SyntheticSpec {
  int width = 192;
  int height = 128;
  int num_frames = 33;
  MotionModel motion_model = MotionModel::GlobalTranslation;
  double velocity_x = 0.0;  // pixels per frame
  double velocity_y = 0.0;
  std::uint64_t texture_seed = 1;
  double noise_sigma = 0.0;

  void validate() const {
    if (width <= 0 || height <= 0 || width % 16 != 0 || height % 16 != 0)
      throw PreconditionError("synthetic size must be positive multiples of 16");
    if (num_frames < kMinSyntheticFrames)
      throw PreconditionError("synthetic sequences need at least 33 frames");
    if (!(std::abs(velocity_x) <= kMaxSyntheticVelocity) ||
        !(std::abs(velocity_y) <= kMaxSyntheticVelocity))
      throw PreconditionError("synthetic velocity exceeds 8 px/frame");
    if (!(noise_sigma >= 0.0)) throw PreconditionError("noise_sigma must be >= 0");
  }
};

namespace detail {

// Periodic multi-octave value noise; tiles seamlessly over width x height so
// translated frames can wrap around.
class PeriodicTexture {
 public:
  PeriodicTexture(int width, int height, std::uint64_t seed, double amplitude)
      : width_(width), height_(height), values_(std::size_t(width) * height) {
    static constexpr std::array<int, 5> kCells = {64, 32, 16, 8, 4};
    static constexpr std::array<double, 5> kGains = {1.0, 0.7, 0.5, 0.35, 0.25};
    Rng rng(seed);
    for (std::size_t o = 0; o < kCells.size(); ++o) {
      const int gx = std::max(1, int(std::lround(double(width) / kCells[o])));
      const int gy = std::max(1, int(std::lround(double(height) / kCells[o])));
      std::vector<double> lattice(std::size_t(gx) * gy);
      for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
      for (int y = 0; y < height; ++y) {
        const double fy = double(y) * gy / height;
        const int y0 = int(fy) % gy;
        const int y1 = (y0 + 1) % gy;
        const double ty = smooth(fy - std::floor(fy));
        for (int x = 0; x < width; ++x) {
          const double fx = double(x) * gx / width;
          const int x0 = int(fx) % gx;
          const int x1 = (x0 + 1) % gx;
          const double tx = smooth(fx - std::floor(fx));
          const double top = lerp(lattice[y0 * gx + x0], lattice[y0 * gx + x1], tx);
          const double bot = lerp(lattice[y1 * gx + x0], lattice[y1 * gx + x1], tx);
          values_[std::size_t(y) * width + x] += kGains[o] * lerp(top, bot, ty);
        }
      }
    }
    for (auto& v : values_) v = 128.0 + amplitude * v;
  }

  // Sample of the texture translated by (sx, sy), wrapping at the edges.
  double shifted(int x, int y, int sx, int sy) const {
    const int xs = wrap(x - sx, width_);
    const int ys = wrap(y - sy, height_);
    return values_[std::size_t(ys) * width_ + xs];
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  static double lerp(double a, double b, double t) { return a + (b - a) * t; }
  static int wrap(int v, int n) {
    const int m = v % n;
    return m < 0 ? m + n : m;
  }

  int width_;
  int height_;
  std::vector<double> values_;
};

inline std::uint8_t to_sample(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

// Deterministic synthetic sequence. Frame t shows the layer texture shifted
// by round(t * velocity) with wrap-around. Two-region sequences split rows at
// 3/8 of the height (rounded to 16): the top band moves with `velocity`,
// the rest with -velocity/2.
inline Sequence gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int w = spec.width;
  const int h = spec.height;
  const detail::PeriodicTexture luma_a(w, h, mix_seed(spec.texture_seed, 1), 60.0);
  const detail::PeriodicTexture luma_b(w, h, mix_seed(spec.texture_seed, 2), 60.0);
  const detail::PeriodicTexture cb(w, h, mix_seed(spec.texture_seed, 3), 30.0);
  const detail::PeriodicTexture cr(w, h, mix_seed(spec.texture_seed, 4), 30.0);
  const int boundary = std::max(16, (h * 3 / 8) / 16 * 16);

  Sequence seq;
  seq.frame_rate = 30.0;
  seq.frames.reserve(static_cast<std::size_t>(spec.num_frames));
  for (int t = 0; t < spec.num_frames; ++t) {
    int sx = 0, sy = 0, bx = 0, by = 0;
    if (spec.motion_model != MotionModel::StaticNoise) {
      sx = int(std::lround(t * spec.velocity_x));
      sy = int(std::lround(t * spec.velocity_y));
    }
    if (spec.motion_model == MotionModel::TwoRegionTranslation) {
      bx = int(std::lround(-0.5 * t * spec.velocity_x));
      by = int(std::lround(-0.5 * t * spec.velocity_y));
    }
    auto in_top = [&](int y) {
      return spec.motion_model != MotionModel::TwoRegionTranslation || y < boundary;
    };

    Rng noise(mix_seed(spec.texture_seed, 1000 + static_cast<std::uint64_t>(t)));
    const bool noisy = spec.noise_sigma > 0.0;

    Plane py(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = in_top(y) ? luma_a.shifted(x, y, sx, sy) : luma_b.shifted(x, y, bx, by);
        if (noisy) v += spec.noise_sigma * noise.normal();
        py.at(x, y) = detail::to_sample(v);
      }

    Plane pu(w / 2, h / 2), pv(w / 2, h / 2);
    for (int y = 0; y < h / 2; ++y)
      for (int x = 0; x < w / 2; ++x) {
        double su = 0, sv = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int fx = 2 * x + dx, fy = 2 * y + dy;
            const bool top = in_top(fy);
            su += top ? cb.shifted(fx, fy, sx, sy) : cb.shifted(fx, fy, bx, by);
            sv += top ? cr.shifted(fx, fy, sx, sy) : cr.shifted(fx, fy, bx, by);
          }
        pu.at(x, y) = detail::to_sample(su / 4.0);
        pv.at(x, y) = detail::to_sample(sv / 4.0);
      }
    seq.frames.emplace_back(std::move(py), std::move(pu), std::move(pv));
  }
  return seq;
}

}  // namespace fastmra

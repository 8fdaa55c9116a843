#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "error.hpp"
#include "frame.hpp"
#include "ops.hpp"

namespace fastmra {

inline constexpr int kBlockSize = 16;
inline constexpr int kDefaultSearchRange = 8;
inline constexpr std::array<int, 4> kScales = {1, 2, 4, 8};

inline bool is_valid_scale(int s) { return s == 1 || s == 2 || s == 4 || s == 8; }

inline int scale_index(int s) {
  switch (s) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
    default: throw PreconditionError("invalid downsampling factor " + std::to_string(s));
  }
}

inline int scale_from_index(int i) {
  if (i < 0 || i > 3) throw PreconditionError("invalid scale index " + std::to_string(i));
  return kScales[static_cast<std::size_t>(i)];
}

// Box filter: each output sample is the rounded mean of its S x S source box.
inline Plane downsample_plane(const Plane& p, int s) {
  if (s == 1) return p;
  if (p.width() % s != 0 || p.height() % s != 0)
    throw PreconditionError("plane " + std::to_string(p.width()) + "x" +
                            std::to_string(p.height()) + " not divisible by " +
                            std::to_string(s));
  const int w = p.width() / s;
  const int h = p.height() / s;
  const int area = s * s;
  Plane out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sum = 0;
      for (int j = 0; j < s; ++j) {
        const std::uint8_t* r = p.row(y * s + j) + x * s;
        for (int i = 0; i < s; ++i) sum += r[i];
      }
      out.at(x, y) = static_cast<std::uint8_t>((sum + area / 2) / area);
    }
  return out;
}

inline Frame downsample_frame(const Frame& f, int s) {
  if (!is_valid_scale(s)) throw PreconditionError("invalid downsampling factor " + std::to_string(s));
  if (s == 1) return f;
  if (f.width() % (2 * s) != 0 || f.height() % (2 * s) != 0)
    throw PreconditionError("frame not divisible by downsampling factor " + std::to_string(s));
  return Frame(downsample_plane(f.y(), s), downsample_plane(f.u(), s),
               downsample_plane(f.v(), s));
}

struct MotionVector {
  int dx = 0;
  int dy = 0;
  bool operator==(const MotionVector&) const = default;
};

// One vector per block, raster order. Edge blocks may be partial when the
// plane size is not a multiple of the block size.
struct VectorGrid {
  int cols = 0;
  int rows = 0;
  std::vector<MotionVector> vectors;

  VectorGrid() = default;
  VectorGrid(int c, int r) : cols(c), rows(r), vectors(std::size_t(c) * r) {}
  const MotionVector& at(int c, int r) const { return vectors[std::size_t(r) * cols + c]; }
  MotionVector& at(int c, int r) { return vectors[std::size_t(r) * cols + c]; }
  bool operator==(const VectorGrid&) const = default;
};

inline int blocks_along(int extent, int block) { return (extent + block - 1) / block; }

struct BlockMatch {
  VectorGrid grid;
  std::vector<std::uint32_t> sad;  // best SAD per block
  std::uint64_t total_sad = 0;
};

namespace detail {

// Reference luma with `pad` samples of border replication on every side, so
// any candidate within the search range is a plain memory read.
struct PaddedPlane {
  int pad = 0;
  int stride = 0;
  std::vector<std::uint8_t> data;

  PaddedPlane(const Plane& p, int pad_) : pad(pad_), stride(p.width() + 2 * pad_) {
    const int h = p.height() + 2 * pad;
    data.resize(std::size_t(stride) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < stride; ++x) data[std::size_t(y) * stride + x] = p.clamped(x - pad, y - pad);
  }
  const std::uint8_t* at(int x, int y) const {
    return data.data() + std::size_t(y + pad) * stride + (x + pad);
  }
};

inline std::uint32_t block_sad(const Plane& cur, int x0, int y0, int bw, int bh,
                               const std::uint8_t* ref, int ref_stride) {
  std::uint32_t sad = 0;
#if defined(__SSE2__)
  if (bw == 16) {
    __m128i acc = _mm_setzero_si128();
    for (int j = 0; j < bh; ++j) {
      const __m128i a = _mm_loadu_si128(reinterpret_cast<const __m128i*>(cur.row(y0 + j) + x0));
      const __m128i b = _mm_loadu_si128(reinterpret_cast<const __m128i*>(ref + std::size_t(j) * ref_stride));
      acc = _mm_add_epi64(acc, _mm_sad_epu8(a, b));
    }
    return static_cast<std::uint32_t>(_mm_cvtsi128_si32(acc) +
                                      _mm_cvtsi128_si32(_mm_srli_si128(acc, 8)));
  }
#endif
  for (int j = 0; j < bh; ++j) {
    const std::uint8_t* a = cur.row(y0 + j) + x0;
    const std::uint8_t* b = ref + std::size_t(j) * ref_stride;
    for (int i = 0; i < bw; ++i) sad += static_cast<std::uint32_t>(std::abs(int(a[i]) - int(b[i])));
  }
  return sad;
}

}  // namespace detail

// Full-search integer block matching on one plane. A vector (dx, dy) points
// from a block in `cur` to its match in `ref` (border-clamped). Ties prefer
// the smaller |dx|+|dy|, then smaller dy, then smaller dx. Charges one MAC per
// compared sample.
inline BlockMatch block_me(const Plane& cur, const Plane& ref, int range = kDefaultSearchRange,
                           OpCounter* ops = nullptr) {
  if (cur.width() != ref.width() || cur.height() != ref.height())
    throw PreconditionError("block_me: dimension mismatch");
  if (range < 0) throw PreconditionError("block_me: negative search range");
  const int cols = blocks_along(cur.width(), kBlockSize);
  const int rows = blocks_along(cur.height(), kBlockSize);
  BlockMatch out{VectorGrid(cols, rows), std::vector<std::uint32_t>(std::size_t(cols) * rows), 0};
  const detail::PaddedPlane padded(ref, range);
  const std::uint64_t candidates = std::uint64_t(2 * range + 1) * std::uint64_t(2 * range + 1);

  for (int by = 0; by < rows; ++by)
    for (int bx = 0; bx < cols; ++bx) {
      const int x0 = bx * kBlockSize;
      const int y0 = by * kBlockSize;
      const int bw = std::min(kBlockSize, cur.width() - x0);
      const int bh = std::min(kBlockSize, cur.height() - y0);
      std::tuple<std::uint32_t, int, int, int> best{UINT32_MAX, 0, 0, 0};
      for (int dy = -range; dy <= range; ++dy)
        for (int dx = -range; dx <= range; ++dx) {
          const std::uint32_t sad =
              detail::block_sad(cur, x0, y0, bw, bh, padded.at(x0 + dx, y0 + dy), padded.stride);
          const std::tuple<std::uint32_t, int, int, int> key{sad, std::abs(dx) + std::abs(dy), dy, dx};
          if (key < best) best = key;
        }
      out.grid.at(bx, by) = {std::get<3>(best), std::get<2>(best)};
      out.sad[std::size_t(by) * cols + bx] = std::get<0>(best);
      out.total_sad += std::get<0>(best);
      if (ops) ops->charge(OpCategory::MeSearch, std::uint64_t(bw) * std::uint64_t(bh) * candidates);
    }
  return out;
}

inline BlockMatch block_me(const Frame& cur, const Frame& ref, int range = kDefaultSearchRange,
                           OpCounter* ops = nullptr) {
  if (!same_dimensions(cur, ref)) throw PreconditionError("block_me: dimension mismatch");
  return block_me(cur.y(), ref.y(), range, ops);
}

// Vectors toward each reference at the downsampled resolution.
struct MotionField {
  int scale = 1;
  int block_size = kBlockSize;
  int search_range = kDefaultSearchRange;
  VectorGrid past;
  VectorGrid future;
  std::uint64_t sad_past = 0;
  std::uint64_t sad_future = 0;

  bool operator==(const MotionField&) const = default;
};

inline void check_scale(int width, int height, int s) {
  if (!is_valid_scale(s)) throw PreconditionError("invalid downsampling factor " + std::to_string(s));
  if (width < kBlockSize * s || height < kBlockSize * s)
    throw ScaleTooCoarse("frame " + std::to_string(width) + "x" + std::to_string(height) +
                         " too small for scale " + std::to_string(s));
}

inline VectorGrid empty_grid_for(int width, int height, int s) {
  return VectorGrid(blocks_along(width / s, kBlockSize), blocks_along(height / s, kBlockSize));
}

inline MotionField estimate_bidirectional(const Frame& x, const Frame& ref_past,
                                          const Frame& ref_future, int s,
                                          int range = kDefaultSearchRange,
                                          OpCounter* ops = nullptr) {
  if (!same_dimensions(x, ref_past) || !same_dimensions(x, ref_future))
    throw PreconditionError("estimate_bidirectional: dimension mismatch");
  check_scale(x.width(), x.height(), s);
  const Plane cur = downsample_plane(x.y(), s);
  BlockMatch bp = block_me(cur, downsample_plane(ref_past.y(), s), range, ops);
  BlockMatch bf = block_me(cur, downsample_plane(ref_future.y(), s), range, ops);
  return MotionField{s, kBlockSize, range, std::move(bp.grid), std::move(bf.grid), bp.total_sad,
                     bf.total_sad};
}

// Vectors scaled to full resolution; each applies to a 16S x 16S footprint.
struct FullResMotion {
  int scale = 1;
  int block_size = kBlockSize;
  VectorGrid past;
  VectorGrid future;
};

inline FullResMotion upsample_flow(const MotionField& m) {
  FullResMotion out{m.scale, m.block_size * m.scale, m.past, m.future};
  for (auto* g : {&out.past, &out.future})
    for (auto& v : g->vectors) v = {v.dx * m.scale, v.dy * m.scale};
  return out;
}

namespace detail {

inline void compensate_plane(const Plane& past, const Plane& future, const VectorGrid& vp,
                             const VectorGrid& vf, int block, bool chroma, Plane& out) {
  for (int by = 0; by < vp.rows; ++by)
    for (int bx = 0; bx < vp.cols; ++bx) {
      MotionVector a = vp.at(bx, by);
      MotionVector b = vf.at(bx, by);
      if (chroma) {
        a = {a.dx / 2, a.dy / 2};
        b = {b.dx / 2, b.dy / 2};
      }
      const int x1 = std::min(out.width(), (bx + 1) * block);
      const int y1 = std::min(out.height(), (by + 1) * block);
      for (int y = by * block; y < y1; ++y)
        for (int x = bx * block; x < x1; ++x) {
          const int p = past.clamped(x + a.dx, y + a.dy);
          const int f = future.clamped(x + b.dx, y + b.dy);
          out.at(x, y) = static_cast<std::uint8_t>((p + f + 1) >> 1);
        }
    }
}

}  // namespace detail

// Bidirectional prediction: average of the two displaced, border-clamped
// fetches. Chroma uses the luma vectors halved toward zero.
inline Frame compensate(const Frame& ref_past, const Frame& ref_future, const FullResMotion& m,
                        OpCounter* ops = nullptr) {
  if (!same_dimensions(ref_past, ref_future))
    throw PreconditionError("compensate: reference size mismatch");
  const int w = ref_past.width();
  const int h = ref_past.height();
  if (m.past.cols != blocks_along(w, m.block_size) || m.past.rows != blocks_along(h, m.block_size) ||
      !(m.future.cols == m.past.cols && m.future.rows == m.past.rows))
    throw PreconditionError("compensate: motion grid does not match frame size");
  Frame pred(w, h);
  detail::compensate_plane(ref_past.y(), ref_future.y(), m.past, m.future, m.block_size, false,
                           pred.plane(PlaneId::Y));
  for (int p = 1; p < 3; ++p)
    detail::compensate_plane(ref_past.plane(p), ref_future.plane(p), m.past, m.future,
                             m.block_size / 2, true, pred.plane(p));
  if (ops) ops->charge(OpCategory::Warp, 2 * std::uint64_t(pred.sample_count()));
  return pred;
}

// Luma mean squared error.
inline double prediction_error(const Frame& pred, const Frame& orig) {
  if (!same_dimensions(pred, orig)) throw PreconditionError("prediction_error: dimension mismatch");
  return double(plane_sse(pred.y(), orig.y())) / double(pred.y().size());
}

// Text form used by golden tests and debugging dumps.
inline std::string serialize_motion(const MotionField& m) {
  std::ostringstream os;
  os << "motion_field v1\nscale " << m.scale << "\nblock_size " << m.block_size << "\nsearch_range "
     << m.search_range << "\ngrid " << m.past.cols << ' ' << m.past.rows << '\n';
  for (const auto& [name, g] : {std::pair{"past", &m.past}, std::pair{"future", &m.future}}) {
    os << name;
    for (const auto& v : g->vectors) os << ' ' << v.dx << ',' << v.dy;
    os << '\n';
  }
  return os.str();
}

inline MotionField parse_motion(const std::string& text) {
  std::istringstream is(text);
  std::string tag, version;
  MotionField m;
  int cols = 0, rows = 0;
  auto expect = [&](const char* want) {
    is >> tag;
    if (tag != want) throw FormatError(std::string("motion field: expected '") + want + "'");
  };
  is >> tag >> version;
  if (tag != "motion_field" || version != "v1") throw FormatError("motion field: bad header");
  expect("scale");
  is >> m.scale;
  expect("block_size");
  is >> m.block_size;
  expect("search_range");
  is >> m.search_range;
  expect("grid");
  is >> cols >> rows;
  if (!is || cols <= 0 || rows <= 0) throw FormatError("motion field: bad grid");
  for (auto* g : {&m.past, &m.future}) {
    is >> tag;
    *g = VectorGrid(cols, rows);
    for (auto& v : g->vectors) {
      char comma = 0;
      is >> v.dx >> comma >> v.dy;
      if (!is || comma != ',') throw FormatError("motion field: bad vector");
    }
  }
  return m;
}

}  // namespace fastmra

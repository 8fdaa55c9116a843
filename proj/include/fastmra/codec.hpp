#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bitio.hpp"
#include "error.hpp"
#include "frame.hpp"
#include "gop.hpp"
#include "motion.hpp"
#include "ops.hpp"
#include "transform.hpp"

namespace fastmra {

inline constexpr int kNumQuantizers = 4;

struct QuantConfig {
  int q_index = 1;  // 0..3 -> q = 4, 8, 16, 32

  static QuantConfig from_index(int idx) {
    if (idx < 0 || idx >= kNumQuantizers)
      throw PreconditionError("q index must be 0..3, got " + std::to_string(idx));
    return QuantConfig{idx};
  }
  int q() const { return 4 << q_index; }
  double lambda_rd() const { return 0.85 * double(q()) * double(q()); }
};

struct RdRecord {
  int s_factor = 0;  // 0 for intra frames
  bool skipped = false;  // scale rejected as too coarse; j_cost is +inf
  std::uint64_t rate_bits = 0;
  std::uint64_t distortion_sse = 0;
  double j_cost = 0.0;

  static RdRecord make(int s, std::uint64_t rate, std::uint64_t sse, double lambda) {
    return RdRecord{s, false, rate, sse, double(sse) + lambda * double(rate)};
  }
  static RdRecord skip(int s) {
    return RdRecord{s, true, 0, 0, std::numeric_limits<double>::infinity()};
  }
  bool operator==(const RdRecord&) const = default;
};

// Header layout: type(2) [S code(2), B only] q index(2) payload bits(32) recon checksum(32).
inline constexpr std::uint64_t kIntraHeaderBits = 2 + 2 + 32 + 32;
inline constexpr std::uint64_t kBHeaderBits = kIntraHeaderBits + 2;

struct EncodedFrame {
  std::vector<std::uint8_t> bytes;
  Frame recon;
  RdRecord rd;
  std::optional<MotionField> motion;  // B frames only
};

namespace detail {

inline void check_codable(const Frame& f) {
  if (!f.is_block_aligned())
    throw PreconditionError("coded frames must have dimensions that are multiples of 16");
}

// Zig-zag (run, level) coding with end-of-block. Each pair is ue(run + 1)
// followed by ue(|level| - 1) and a sign bit; ue(0) terminates the block.
inline void write_levels(const Levels8& lv, BitWriter& bw) {
  std::uint32_t run = 0;
  for (int pos : kZigZag) {
    const int l = lv[std::size_t(pos)];
    if (l == 0) {
      ++run;
      continue;
    }
    bw.put_ue(run + 1);
    bw.put_ue(static_cast<std::uint32_t>(std::abs(l) - 1));
    bw.put_bit(l < 0);
    run = 0;
  }
  bw.put_ue(0);
}

inline Levels8 read_levels(BitReader& br) {
  Levels8 lv{};
  int idx = 0;
  for (;;) {
    const std::uint32_t sym = br.get_ue();
    if (sym == 0) break;
    idx += static_cast<int>(sym - 1);
    if (idx >= 64) throw DecodeError("coefficient run past end of block");
    const int mag = static_cast<int>(br.get_ue()) + 1;
    lv[std::size_t(kZigZag[std::size_t(idx)])] = br.get_bit() ? -mag : mag;
    ++idx;
  }
  return lv;
}

inline std::uint8_t clamp_sample(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

// Reconstructs one 8x8 block from its prediction and dequantized levels.
inline void reconstruct_block(const Levels8& lv, const std::array<int, 64>& pred, int q,
                              Plane& recon, int x0, int y0) {
  const Block8 resid = dct8_inverse(dequantize(lv, q));
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i)
      recon.at(x0 + i, y0 + j) = clamp_sample(pred[std::size_t(j * 8 + i)] +
                                              round_half_away(resid[std::size_t(j * 8 + i)]));
}

inline void encode_block(const Plane& orig, const std::array<int, 64>& pred, int q, int x0, int y0,
                         BitWriter& bw, Plane& recon, OpCounter* ops) {
  Block8 resid{};
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i)
      resid[std::size_t(j * 8 + i)] = double(int(orig.at(x0 + i, y0 + j)) - pred[std::size_t(j * 8 + i)]);
  const Levels8 lv = quantize(dct8_forward(resid), q);
  write_levels(lv, bw);
  reconstruct_block(lv, pred, q, recon, x0, y0);
  if (ops) {
    ops->charge(OpCategory::Transform, 2 * kDct8x8Macs);
    ops->charge(OpCategory::EntropyCode, 64);
  }
}

inline std::array<int, 64> block_from_plane(const Plane& p, int x0, int y0) {
  std::array<int, 64> out{};
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) out[std::size_t(j * 8 + i)] = p.at(x0 + i, y0 + j);
  return out;
}

// Intra DC predictor: rounded mean of the reconstructed left block, else the
// block above, else 128.
inline int intra_dc_predictor(const Plane& recon, int x0, int y0) {
  int bx = -1, by = -1;
  if (x0 > 0) {
    bx = x0 - 8;
    by = y0;
  } else if (y0 > 0) {
    bx = x0;
    by = y0 - 8;
  } else {
    return 128;
  }
  int sum = 0;
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) sum += recon.at(bx + i, by + j);
  return (sum + 32) / 64;
}

inline void encode_intra_plane(const Plane& orig, int q, BitWriter& bw, Plane& recon, OpCounter* ops) {
  for (int y0 = 0; y0 < orig.height(); y0 += 8)
    for (int x0 = 0; x0 < orig.width(); x0 += 8) {
      std::array<int, 64> pred;
      pred.fill(intra_dc_predictor(recon, x0, y0));
      encode_block(orig, pred, q, x0, y0, bw, recon, ops);
    }
}

inline void decode_intra_plane(BitReader& br, int q, Plane& recon) {
  for (int y0 = 0; y0 < recon.height(); y0 += 8)
    for (int x0 = 0; x0 < recon.width(); x0 += 8) {
      std::array<int, 64> pred;
      pred.fill(intra_dc_predictor(recon, x0, y0));
      reconstruct_block(read_levels(br), pred, q, recon, x0, y0);
    }
}

inline void encode_residual_plane(const Plane& orig, const Plane& pred, int q, BitWriter& bw,
                                  Plane& recon, OpCounter* ops) {
  for (int y0 = 0; y0 < orig.height(); y0 += 8)
    for (int x0 = 0; x0 < orig.width(); x0 += 8)
      encode_block(orig, block_from_plane(pred, x0, y0), q, x0, y0, bw, recon, ops);
}

inline void decode_residual_plane(BitReader& br, const Plane& pred, int q, Plane& recon) {
  for (int y0 = 0; y0 < recon.height(); y0 += 8)
    for (int x0 = 0; x0 < recon.width(); x0 += 8)
      reconstruct_block(read_levels(br), block_from_plane(pred, x0, y0), q, recon, x0, y0);
}

struct FrameHeader {
  FrameType type = FrameType::Intra;
  int s_factor = 0;
  int q_index = 0;
  std::uint32_t payload_bits = 0;
  std::uint32_t checksum = 0;
};

inline std::vector<std::uint8_t> assemble_frame(const FrameHeader& h, const BitWriter& payload) {
  BitWriter bw;
  bw.put_bits(static_cast<std::uint64_t>(h.type), 2);
  if (h.type == FrameType::B) bw.put_bits(static_cast<std::uint64_t>(scale_index(h.s_factor)), 2);
  bw.put_bits(static_cast<std::uint64_t>(h.q_index), 2);
  bw.put_bits(h.payload_bits, 32);
  bw.put_bits(h.checksum, 32);
  bw.append(payload);
  bw.align();
  return bw.bytes();
}

inline FrameHeader read_header(BitReader& br) {
  FrameHeader h;
  const auto type = br.get_bits(2);
  if (type > 1) throw DecodeError("unknown frame type code " + std::to_string(type));
  h.type = static_cast<FrameType>(type);
  if (h.type == FrameType::B) h.s_factor = scale_from_index(static_cast<int>(br.get_bits(2)));
  h.q_index = static_cast<int>(br.get_bits(2));
  h.payload_bits = static_cast<std::uint32_t>(br.get_bits(32));
  h.checksum = static_cast<std::uint32_t>(br.get_bits(32));
  return h;
}

inline Plane plane_like(const Plane& p) { return Plane(p.width(), p.height()); }

}  // namespace detail

inline EncodedFrame encode_intra(const Frame& x, const QuantConfig& qc, OpCounter* ops = nullptr) {
  detail::check_codable(x);
  BitWriter payload;
  Frame recon(x.width(), x.height());
  for (int p = 0; p < 3; ++p) detail::encode_intra_plane(x.plane(p), qc.q(), payload, recon.plane(p), ops);
  const detail::FrameHeader h{FrameType::Intra, 0, qc.q_index,
                              static_cast<std::uint32_t>(payload.bit_count()), frame_checksum(recon)};
  EncodedFrame out;
  out.bytes = detail::assemble_frame(h, payload);
  out.rd = RdRecord::make(0, 8 * out.bytes.size(), frame_sse(x, recon), qc.lambda_rd());
  out.recon = std::move(recon);
  return out;
}

// Motion-vector predictor: component-wise median of left, above and
// above-right (unavailable -> 0). On the first block row only the left
// neighbour exists and is used directly.
inline MotionVector median_predictor(const VectorGrid& g, int c, int r) {
  if (r == 0) return c > 0 ? g.at(c - 1, 0) : MotionVector{};
  const MotionVector left = c > 0 ? g.at(c - 1, r) : MotionVector{};
  const MotionVector above = g.at(c, r - 1);
  const MotionVector above_right = c + 1 < g.cols ? g.at(c + 1, r - 1) : MotionVector{};
  auto med = [](int a, int b, int d) { return std::max(std::min(a, b), std::min(std::max(a, b), d)); };
  return {med(left.dx, above.dx, above_right.dx), med(left.dy, above.dy, above_right.dy)};
}

// Signed exp-Golomb of each vector minus its median prediction; past grid
// first, then future, raster order.
inline void encode_motion(const MotionField& m, BitWriter& bw, OpCounter* ops = nullptr) {
  for (const VectorGrid* g : {&m.past, &m.future}) {
    for (int r = 0; r < g->rows; ++r)
      for (int c = 0; c < g->cols; ++c) {
        const MotionVector p = median_predictor(*g, c, r);
        const MotionVector v = g->at(c, r);
        bw.put_se(v.dx - p.dx);
        bw.put_se(v.dy - p.dy);
      }
    if (ops) ops->charge(OpCategory::EntropyCode, 2 * g->vectors.size());
  }
}

inline std::pair<VectorGrid, VectorGrid> decode_motion(BitReader& br, int cols, int rows) {
  std::pair<VectorGrid, VectorGrid> out{VectorGrid(cols, rows), VectorGrid(cols, rows)};
  for (VectorGrid* g : {&out.first, &out.second})
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const MotionVector p = median_predictor(*g, c, r);
        const int dx = br.get_se();
        const int dy = br.get_se();
        g->at(c, r) = {p.dx + dx, p.dy + dy};
      }
  return out;
}

// Codes one B frame at downsampling factor `s`. A motion field already
// estimated at that scale (e.g. by a search policy) can be passed to skip
// re-estimation.
inline EncodedFrame encode_b_frame(const Frame& x, const Frame& ref_past, const Frame& ref_future,
                                   int s, const QuantConfig& qc, OpCounter* ops = nullptr,
                                   const MotionField* precomputed = nullptr,
                                   int range = kDefaultSearchRange) {
  detail::check_codable(x);
  MotionField m = precomputed ? *precomputed
                              : estimate_bidirectional(x, ref_past, ref_future, s, range, ops);
  if (m.scale != s) throw PreconditionError("precomputed motion field has a different scale");
  BitWriter payload;
  encode_motion(m, payload, ops);
  const Frame pred = compensate(ref_past, ref_future, upsample_flow(m), ops);
  Frame recon(x.width(), x.height());
  for (int p = 0; p < 3; ++p)
    detail::encode_residual_plane(x.plane(p), pred.plane(p), qc.q(), payload, recon.plane(p), ops);
  const detail::FrameHeader h{FrameType::B, s, qc.q_index,
                              static_cast<std::uint32_t>(payload.bit_count()), frame_checksum(recon)};
  EncodedFrame out;
  out.bytes = detail::assemble_frame(h, payload);
  out.rd = RdRecord::make(s, 8 * out.bytes.size(), frame_sse(x, recon), qc.lambda_rd());
  out.recon = std::move(recon);
  out.motion = std::move(m);
  return out;
}

struct DecodedFrame {
  Frame recon;
  FrameType type = FrameType::Intra;
  int s_factor = 0;
  int q_index = 0;
};

// Decodes one frame; B frames need both reconstructed references.
inline DecodedFrame decode_frame(std::span<const std::uint8_t> bytes, int width, int height,
                                 const Frame* ref_past = nullptr, const Frame* ref_future = nullptr) {
  BitReader hr(bytes);
  const detail::FrameHeader h = detail::read_header(hr);
  const std::size_t header_bits = hr.position();
  if (header_bits + h.payload_bits > bytes.size() * 8)
    throw TruncatedData("frame payload truncated: need " + std::to_string(h.payload_bits) +
                        " bits, have " + std::to_string(bytes.size() * 8 - header_bits));
  BitReader br(bytes, header_bits + h.payload_bits);
  for (std::size_t i = 0; i < header_bits; ++i) br.get_bit();

  DecodedFrame out;
  out.type = h.type;
  out.s_factor = h.s_factor;
  out.q_index = h.q_index;
  const int q = QuantConfig::from_index(h.q_index).q();
  Frame recon(width, height);
  if (h.type == FrameType::Intra) {
    for (int p = 0; p < 3; ++p) detail::decode_intra_plane(br, q, recon.plane(p));
  } else {
    if (!ref_past || !ref_future) throw DecodeError("B frame decoded without references");
    const VectorGrid shape = empty_grid_for(width, height, h.s_factor);
    auto [vp, vf] = decode_motion(br, shape.cols, shape.rows);
    MotionField m{h.s_factor, kBlockSize, kDefaultSearchRange, std::move(vp), std::move(vf), 0, 0};
    const Frame pred = compensate(*ref_past, *ref_future, upsample_flow(m));
    for (int p = 0; p < 3; ++p) detail::decode_residual_plane(br, pred.plane(p), q, recon.plane(p));
  }
  if (br.remaining() != 0) throw DecodeError("payload has trailing bits");
  if (frame_checksum(recon) != h.checksum) throw ChecksumMismatch("reconstruction checksum mismatch");
  out.recon = std::move(recon);
  return out;
}

// ---------------------------------------------------------------------------
// Sequence level

inline constexpr double kPsnrCap = 100.0;

struct FrameReport {
  int coding_order = 0;
  int display_index = 0;
  FrameType type = FrameType::Intra;
  int temporal_level = 0;
  int s_factor = 0;
  RdRecord rd;
  double psnr = 0;  // combined, capped at kPsnrCap
  std::uint64_t cumulative_bits = 0;
};

struct SequenceReport {
  std::string sequence_id;
  std::string policy;
  int q_index = 0;
  int width = 0;
  int height = 0;
  int num_frames = 0;
  std::vector<FrameReport> frames;  // coding order
  std::uint64_t total_bits = 0;
  double mean_psnr = 0;
  OpCounter ops;

  double bpp() const { return double(total_bits) / (double(width) * height * num_frames); }
};

struct SequenceBitstream {
  int width = 0;
  int height = 0;
  std::vector<std::vector<std::uint8_t>> frames;  // coding order

  std::uint64_t total_bits() const {
    std::uint64_t t = 0;
    for (const auto& f : frames) t += 8 * f.size();
    return t;
  }
};

struct BFrameContext {
  const GopEntry& entry;
  const Frame& x;
  const Frame& ref_past;
  const Frame& ref_future;
  const QuantConfig& qc;
  int search_range = kDefaultSearchRange;
};

// What a scale policy hands back: the factor, and optionally work it already
// did that the encoder can reuse (a finished encode or the motion field).
struct ScaleChoice {
  int scale = 1;
  std::optional<EncodedFrame> encoded;
  std::optional<MotionField> motion;
  std::vector<RdRecord> candidates;  // exhaustive searches report all four
};

using ScaleDecider = std::function<ScaleChoice(const BFrameContext&, OpCounter&)>;
using FrameObserver =
    std::function<void(const BFrameContext&, const ScaleChoice&, const EncodedFrame&)>;

struct EncodeOutcome {
  SequenceReport report;
  SequenceBitstream bitstream;
  std::vector<Frame> recon;  // display order
};

inline EncodeOutcome encode_sequence(const Sequence& seq, const GopPlan& plan,
                                     const ScaleDecider& decide, const QuantConfig& qc,
                                     const FrameObserver& observer = {},
                                     int range = kDefaultSearchRange) {
  seq.validate();
  if (plan.num_frames != static_cast<int>(seq.size()))
    throw PreconditionError("plan covers " + std::to_string(plan.num_frames) +
                            " frames, sequence has " + std::to_string(seq.size()));
  detail::check_codable(seq.frames.front());

  EncodeOutcome out;
  out.report.q_index = qc.q_index;
  out.report.width = seq.width();
  out.report.height = seq.height();
  out.report.num_frames = static_cast<int>(seq.size());
  out.bitstream.width = seq.width();
  out.bitstream.height = seq.height();
  out.recon.resize(seq.size());
  std::vector<bool> ready(seq.size(), false);

  double psnr_sum = 0;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const GopEntry& e = plan.entries[i];
    const Frame& x = seq.frames[std::size_t(e.display_index)];
    OpCounter& ops = out.report.ops;
    EncodedFrame enc;
    int s = 0;
    if (e.type == FrameType::Intra) {
      enc = encode_intra(x, qc, &ops);
    } else {
      if (!ready[std::size_t(e.ref_past)] || !ready[std::size_t(e.ref_future)])
        throw PreconditionError("plan references a frame that is not coded yet");
      const BFrameContext ctx{e, x, out.recon[std::size_t(e.ref_past)],
                              out.recon[std::size_t(e.ref_future)], qc, range};
      ScaleChoice choice = decide(ctx, ops);
      s = choice.scale;
      if (choice.encoded) {
        enc = *choice.encoded;
      } else {
        const MotionField* hint =
            choice.motion && choice.motion->scale == s ? &*choice.motion : nullptr;
        enc = encode_b_frame(x, ctx.ref_past, ctx.ref_future, s, qc, &ops, hint, range);
      }
      if (observer) observer(ctx, choice, enc);
    }
    ops.add_pixels(std::uint64_t(x.width()) * std::uint64_t(x.height()));

    FrameReport fr;
    fr.coding_order = static_cast<int>(i);
    fr.display_index = e.display_index;
    fr.type = e.type;
    fr.temporal_level = e.temporal_level;
    fr.s_factor = s;
    fr.rd = enc.rd;
    fr.psnr = std::min(kPsnrCap, psnr(x, enc.recon).combined);
    out.report.total_bits += 8 * enc.bytes.size();
    fr.cumulative_bits = out.report.total_bits;
    psnr_sum += fr.psnr;
    out.report.frames.push_back(fr);

    out.bitstream.frames.push_back(std::move(enc.bytes));
    out.recon[std::size_t(e.display_index)] = std::move(enc.recon);
    ready[std::size_t(e.display_index)] = true;
  }
  out.report.mean_psnr = psnr_sum / double(plan.entries.size());
  return out;
}

inline Sequence decode_sequence(const SequenceBitstream& bs, const GopPlan& plan) {
  if (bs.frames.size() != plan.entries.size())
    throw DecodeError("bitstream holds " + std::to_string(bs.frames.size()) + " frames, plan has " +
                      std::to_string(plan.entries.size()));
  Sequence out;
  out.frames.resize(static_cast<std::size_t>(plan.num_frames));
  std::vector<bool> ready(out.frames.size(), false);
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const GopEntry& e = plan.entries[i];
    try {
      const Frame* past = nullptr;
      const Frame* future = nullptr;
      if (e.type == FrameType::B) {
        if (!ready[std::size_t(e.ref_past)] || !ready[std::size_t(e.ref_future)])
          throw DecodeError("missing reference");
        past = &out.frames[std::size_t(e.ref_past)];
        future = &out.frames[std::size_t(e.ref_future)];
      }
      DecodedFrame d = decode_frame(bs.frames[i], bs.width, bs.height, past, future);
      if (d.type != e.type) throw DecodeError("frame type disagrees with the coding plan");
      out.frames[std::size_t(e.display_index)] = std::move(d.recon);
      ready[std::size_t(e.display_index)] = true;
    } catch (const ChecksumMismatch& err) {
      throw ChecksumMismatch("frame " + std::to_string(e.display_index) + ": " + err.what());
    } catch (const Error& err) {
      throw DecodeError("frame " + std::to_string(e.display_index) + ": " + err.what());
    }
  }
  return out;
}

}  // namespace fastmra

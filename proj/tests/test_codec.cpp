#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fastmra/codec.hpp"
#include "fastmra/synthetic.hpp"
#include "test_util.hpp"

namespace fastmra {
namespace {

// Direct evaluation of the orthonormal 2-D DCT-II definition.
Block8 reference_dct(const Block8& in) {
  Block8 out{};
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          s += in[std::size_t(y * 8 + x)] * std::cos((2 * x + 1) * v * std::numbers::pi / 16) *
               std::cos((2 * y + 1) * u * std::numbers::pi / 16);
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      const double cv = v == 0 ? std::sqrt(0.125) : 0.5;
      out[std::size_t(u * 8 + v)] = cu * cv * s;
    }
  return out;
}

Block8 random_block(std::uint64_t seed) {
  Rng rng(seed);
  Block8 b{};
  for (auto& v : b) v = rng.uniform(-255, 255);
  return b;
}

TEST(Dct, ZeroBlock) {
  for (double c : dct8_forward(Block8{})) EXPECT_EQ(c, 0.0);
}

TEST(Dct, ConstantBlockHasOnlyDc) {
  Block8 b;
  b.fill(37.0);
  const Block8 c = dct8_forward(b);
  EXPECT_NEAR(c[0], 8 * 37.0, 1e-12);
  for (std::size_t i = 1; i < 64; ++i) EXPECT_NEAR(c[i], 0.0, 1e-12);
}

TEST(Dct, MatchesDefinitionAndInverts) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Block8 b = random_block(s);
    const Block8 c = dct8_forward(b);
    const Block8 ref = reference_dct(b);
    const Block8 back = dct8_inverse(c);
    for (std::size_t i = 0; i < 64; ++i) {
      EXPECT_NEAR(c[i], ref[i], 1e-9);
      EXPECT_NEAR(back[i], b[i], 1e-9);
    }
  }
}

TEST(Quantize, RoundHalfAwayFromZero) {
  Block8 c{};
  c[0] = 10;
  c[1] = -10;
  c[2] = 1.9;
  c[3] = -2.0;
  const Levels8 l = quantize(c, 4);
  EXPECT_EQ(l[0], 3);
  EXPECT_EQ(l[1], -3);
  EXPECT_EQ(l[2], 0);
  EXPECT_EQ(l[3], -1);  // -0.5 -> -1
  EXPECT_EQ(dequantize(l, 4)[0], 12.0);
  EXPECT_EQ(l[4], 0);
}

TEST(Quantize, IdempotentOnItsImage) {
  for (int q : {4, 8, 16, 32}) {
    const Block8 once = dequantize(quantize(random_block(q), q), q);
    EXPECT_EQ(dequantize(quantize(once, q), q), once);
  }
}

std::string bits_of(const BitWriter& w) {
  std::string s;
  for (std::size_t i = 0; i < w.bit_count(); ++i)
    s += ((w.bytes()[i / 8] >> (7 - i % 8)) & 1) ? '1' : '0';
  return s;
}

TEST(ExpGolomb, CodeTable) {
  const std::vector<std::pair<std::uint32_t, std::string>> table = {
      {0, "1"}, {1, "010"}, {2, "011"}, {3, "00100"}, {6, "00111"}, {7, "0001000"}};
  for (const auto& [v, code] : table) {
    BitWriter w;
    w.put_ue(v);
    EXPECT_EQ(bits_of(w), code) << v;
    EXPECT_EQ(ue_length(v), code.size());
  }
  BitWriter w;
  w.put_se(0);
  w.put_se(1);
  w.put_se(-1);
  w.put_se(5);
  EXPECT_EQ(bits_of(w), "1" "010" "011" "0001010");
}

TEST(ExpGolomb, RandomRoundTrip) {
  Rng rng(3);
  std::vector<std::int32_t> vals;
  BitWriter w;
  for (int i = 0; i < 2000; ++i) {
    const auto v = static_cast<std::int32_t>(rng.below(20001)) - 10000;
    vals.push_back(v);
    w.put_se(v);
  }
  BitReader r(w.bytes());
  for (auto v : vals) EXPECT_EQ(r.get_se(), v);
  EXPECT_THROW({ for (;;) r.get_se(); }, DecodeError);
}

Frame texture_frame(int w, int h, std::uint64_t seed, double vx = 0, int t = 0) {
  SyntheticSpec spec;
  spec.width = w;
  spec.height = h;
  spec.texture_seed = seed;
  spec.velocity_x = vx;
  return gen_synthetic(spec).frames.at(std::size_t(t));
}

TEST(Intra, ConstantMidGrayCodesOnlyEndOfBlock) {
  const Frame x(64, 64, 128, 128, 128);
  const QuantConfig qc = QuantConfig::from_index(0);
  const EncodedFrame e = encode_intra(x, qc);
  const std::uint64_t blocks = 64 + 2 * 16;
  const std::uint64_t exact = kIntraHeaderBits + blocks;  // one EOB bit per block
  EXPECT_EQ(e.rd.rate_bits, (exact + 7) / 8 * 8);
  EXPECT_EQ(e.rd.distortion_sse, 0u);
  EXPECT_EQ(e.recon, x);
}

TEST(Intra, DecodeMatchesReconstruction) {
  for (int qi = 0; qi < 4; ++qi) {
    const Frame x = texture_frame(64, 48, 5 + qi);
    const EncodedFrame e = encode_intra(x, QuantConfig::from_index(qi));
    const DecodedFrame d = decode_frame(e.bytes, 64, 48);
    EXPECT_EQ(d.recon, e.recon);
    EXPECT_EQ(d.type, FrameType::Intra);
    EXPECT_EQ(d.q_index, qi);
  }
}

TEST(Intra, FinerQuantizerLowersCorpusDistortion) {
  double fine = 0, coarse = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Frame x = texture_frame(64, 64, 100 + s);
    fine += double(encode_intra(x, QuantConfig::from_index(0)).rd.distortion_sse);
    coarse += double(encode_intra(x, QuantConfig::from_index(3)).rd.distortion_sse);
  }
  EXPECT_LE(fine, coarse);
}

TEST(MotionCoding, ZeroFieldCostsOneBitPerComponent) {
  MotionField m;
  m.past = VectorGrid(4, 3);
  m.future = VectorGrid(4, 3);
  BitWriter w;
  encode_motion(m, w);
  EXPECT_EQ(w.bit_count(), 2u * 2u * 12u);
}

TEST(MotionCoding, UniformFieldPaysOnce) {
  MotionField m;
  m.past = VectorGrid(4, 3);
  m.future = VectorGrid(4, 3);
  for (auto& v : m.past.vectors) v = {5, 0};
  BitWriter w;
  encode_motion(m, w);
  const std::size_t first = se_length(5) + se_length(0);
  EXPECT_EQ(w.bit_count(), first + 2 * 11 + 2 * 12);
  BitReader r(w.bytes());
  const auto [p, f] = decode_motion(r, 4, 3);
  EXPECT_EQ(p, m.past);
  EXPECT_EQ(f, m.future);
}

TEST(MotionCoding, RandomFieldRoundTrip) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int cols = int(1 + rng.below(8)), rows = int(1 + rng.below(6));
    MotionField m;
    m.past = VectorGrid(cols, rows);
    m.future = VectorGrid(cols, rows);
    for (auto* g : {&m.past, &m.future})
      for (auto& v : g->vectors) v = {int(rng.below(17)) - 8, int(rng.below(17)) - 8};
    BitWriter w;
    encode_motion(m, w);
    BitReader r(w.bytes());
    const auto [p, f] = decode_motion(r, cols, rows);
    EXPECT_EQ(p, m.past);
    EXPECT_EQ(f, m.future);
  }
}

TEST(BFrame, IdenticalReferencesCostNearMinimum) {
  const Frame x = texture_frame(192, 128, 7);
  for (int s : kScales) {
    const EncodedFrame e = encode_b_frame(x, x, x, s, QuantConfig::from_index(1));
    EXPECT_EQ(e.rd.distortion_sse, 0u);
    for (const auto* g : {&e.motion->past, &e.motion->future})
      for (const auto& v : g->vectors) EXPECT_EQ(v, (MotionVector{0, 0}));
    const std::uint64_t vectors = 2 * e.motion->past.vectors.size();
    const std::uint64_t blocks = 24 * 16 + 2 * 12 * 8;
    EXPECT_EQ(e.rd.rate_bits, (kBHeaderBits + 2 * vectors + blocks + 7) / 8 * 8) << s;
  }
}

TEST(BFrame, DomainShiftLargeMotionPrefersCoarseScale) {
  SyntheticSpec spec;
  spec.velocity_x = 1.5;
  spec.texture_seed = 12;
  const Sequence seq = gen_synthetic(spec);
  const QuantConfig qc = QuantConfig::from_index(1);
  const EncodedFrame s1 = encode_b_frame(seq.frames[16], seq.frames[0], seq.frames[32], 1, qc);
  const EncodedFrame s4 = encode_b_frame(seq.frames[16], seq.frames[0], seq.frames[32], 4, qc);
  EXPECT_LT(s4.rd.j_cost, s1.rd.j_cost);
  EXPECT_EQ(s4.motion->past.at(1, 0), (MotionVector{-6, 0}));
  EXPECT_EQ(s4.motion->future.at(1, 0), (MotionVector{6, 0}));
}

TEST(BFrame, DecodeMatchesEveryScaleAndQuantizer) {
  SyntheticSpec spec;
  spec.velocity_x = 2.0;
  spec.velocity_y = -0.5;
  spec.noise_sigma = 1.5;
  spec.texture_seed = 3;
  const Sequence seq = gen_synthetic(spec);
  for (int qi = 0; qi < 4; ++qi)
    for (int s : kScales) {
      const EncodedFrame e =
          encode_b_frame(seq.frames[4], seq.frames[0], seq.frames[8], s, QuantConfig::from_index(qi));
      const DecodedFrame d = decode_frame(e.bytes, 192, 128, &seq.frames[0], &seq.frames[8]);
      EXPECT_EQ(d.recon, e.recon) << "q" << qi << " S" << s;
      EXPECT_EQ(d.s_factor, s);
      // j_cost is recomputable from the record.
      const double j = double(e.rd.distortion_sse) + QuantConfig::from_index(qi).lambda_rd() * double(e.rd.rate_bits);
      EXPECT_NEAR(e.rd.j_cost, j, 1e-9 * j);
      EXPECT_EQ(e.rd.rate_bits, 8 * e.bytes.size());
      EXPECT_EQ(e.rd.distortion_sse, frame_sse(seq.frames[4], e.recon));
    }
}

TEST(BFrame, PrecomputedMotionGivesSameEncode) {
  const Sequence seq = gen_synthetic(SyntheticSpec{192, 128, 33, MotionModel::GlobalTranslation, 1.0, 0, 4, 0});
  const QuantConfig qc = QuantConfig::from_index(2);
  const MotionField m = estimate_bidirectional(seq.frames[2], seq.frames[0], seq.frames[4], 2);
  OpCounter with_hint, without;
  const EncodedFrame a = encode_b_frame(seq.frames[2], seq.frames[0], seq.frames[4], 2, qc, &with_hint, &m);
  const EncodedFrame b = encode_b_frame(seq.frames[2], seq.frames[0], seq.frames[4], 2, qc, &without);
  EXPECT_EQ(a.bytes, b.bytes);
  EXPECT_EQ(with_hint.count(OpCategory::MeSearch), 0u);
  EXPECT_GT(without.count(OpCategory::MeSearch), 0u);
}

TEST(QuantConfig, LambdaAndRange) {
  EXPECT_EQ(QuantConfig::from_index(0).q(), 4);
  EXPECT_EQ(QuantConfig::from_index(3).q(), 32);
  EXPECT_DOUBLE_EQ(QuantConfig::from_index(1).lambda_rd(), 0.85 * 64);
  EXPECT_THROW(QuantConfig::from_index(4), PreconditionError);
}

ScaleDecider fixed(int s) {
  return [s](const BFrameContext&, OpCounter&) { return ScaleChoice{s, {}, {}, {}}; };
}

TEST(Sequence, StaticFixedScaleOneAndAccounting) {
  SyntheticSpec spec;
  spec.motion_model = MotionModel::StaticNoise;
  spec.texture_seed = 2;
  const Sequence seq = gen_synthetic(spec);
  const GopPlan plan = build_gop_plan(33);
  const EncodeOutcome out = encode_sequence(seq, plan, fixed(1), QuantConfig::from_index(1));
  ASSERT_EQ(out.report.frames.size(), 33u);
  EXPECT_EQ(out.report.total_bits, out.bitstream.total_bits());
  std::uint64_t sum = 0;
  for (const auto& f : out.report.frames) {
    sum += f.rd.rate_bits;
    EXPECT_EQ(f.cumulative_bits, sum);
    if (f.type == FrameType::B) EXPECT_EQ(f.s_factor, 1);
  }
  EXPECT_EQ(sum, out.report.total_bits);
  EXPECT_EQ(out.report.ops.pixel_base(), 33u * 192 * 128);
  EXPECT_GT(out.report.mean_psnr, 35.0);
  EXPECT_EQ(decode_sequence(out.bitstream, plan).frames, out.recon);
}

TEST(Sequence, DecodeErrors) {
  SyntheticSpec spec;
  spec.velocity_x = 1.0;
  spec.texture_seed = 6;
  const Sequence seq = gen_synthetic(spec);
  const GopPlan plan = build_gop_plan(33);
  const EncodeOutcome out = encode_sequence(seq, plan, fixed(2), QuantConfig::from_index(2));

  SequenceBitstream truncated = out.bitstream;
  truncated.frames[5].resize(truncated.frames[5].size() / 2);
  EXPECT_THROW(decode_sequence(truncated, plan), DecodeError);

  // Flip both bits of the S code of the first B frame (coding order 2).
  SequenceBitstream flipped = out.bitstream;
  flipped.frames[2][0] ^= 0x30;
  EXPECT_THROW(decode_sequence(flipped, plan), DecodeError);

  SequenceBitstream bad_sum = out.bitstream;
  bad_sum.frames[2][5] ^= 0x01;  // inside the checksum field
  EXPECT_THROW(decode_sequence(bad_sum, plan), ChecksumMismatch);
}

TEST(Sequence, RateDistortionMonotoneInQuantizer) {
  std::array<double, 4> rate{}, dist{};
  for (std::uint64_t s = 0; s < 3; ++s) {
    SyntheticSpec spec;
    spec.velocity_x = 0.5 * double(s);
    spec.texture_seed = 40 + s;
    const Sequence seq = gen_synthetic(spec);
    const GopPlan plan = build_gop_plan(33);
    for (int qi = 0; qi < 4; ++qi) {
      const EncodeOutcome out = encode_sequence(seq, plan, fixed(1), QuantConfig::from_index(qi));
      for (const auto& f : out.report.frames) {
        rate[std::size_t(qi)] += double(f.rd.rate_bits);
        dist[std::size_t(qi)] += double(f.rd.distortion_sse);
      }
    }
  }
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_LT(rate[i], rate[i - 1]);
    EXPECT_GT(dist[i], dist[i - 1]);
  }
}

}  // namespace
}  // namespace fastmra

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "fastmra/policy.hpp"
#include "fastmra/report.hpp"
#include "fastmra/synthetic.hpp"

namespace fastmra {
namespace {

RdCurve curve_from(const std::function<double(double)>& log_rate, std::vector<double> psnrs) {
  RdCurve c;
  for (double q : psnrs) c.points.push_back({std::pow(10.0, log_rate(q)), q});
  c.sort();
  return c;
}

const RdCurve kAnchor = curve_from([](double q) { return 0.08 * q - 3.5; }, {30, 33, 36, 39, 42});

TEST(BdRate, IdenticalCurvesGiveZero) {
  EXPECT_NEAR(bd_rate(kAnchor, kAnchor), 0.0, 1e-12);
}

TEST(BdRate, UniformRateScaling) {
  RdCurve test = kAnchor;
  for (auto& p : test.points) p.rate *= 1.1;
  EXPECT_NEAR(bd_rate(kAnchor, test), 10.0, 1e-6);
  for (auto& p : test.points) p.rate /= 1.1 * 1.1;
  EXPECT_NEAR(bd_rate(kAnchor, test), 100.0 * (1 / 1.1 - 1), 1e-6);
}

TEST(BdRate, SwappingCurvesInvertsRatio) {
  const RdCurve b = curve_from([](double q) { return 0.07 * q - 3.1 + 1e-4 * (q - 35) * (q - 35); },
                               {31, 34, 37, 40, 43});
  const double ab = bd_rate(kAnchor, b), ba = bd_rate(b, kAnchor);
  EXPECT_NEAR((1 + ab / 100) * (1 + ba / 100), 1.0, 1e-12);
  EXPECT_NEAR(bd_log_rate_delta(kAnchor, b), -bd_log_rate_delta(b, kAnchor), 1e-15);
}

TEST(BdRate, ExactForCubicCurvesOverPartialOverlap) {
  // log10 R_test - log10 R_anchor = 0.05 + 0.001 (q - 30)^2. The PSNR
  // overlap is [33, 42]; the mean of the difference there is
  // 0.05 + 0.001 * ((42-30)^3 - (33-30)^3) / (3 * 9).
  const auto anchor_log = [](double q) { return 0.08 * q - 3.5; };
  const RdCurve test = curve_from(
      [&](double q) { return anchor_log(q) + 0.05 + 0.001 * (q - 30) * (q - 30); }, {33, 36, 39, 42, 45});
  const double delta = 0.05 + 0.001 * (std::pow(12.0, 3) - std::pow(3.0, 3)) / 27.0;
  EXPECT_NEAR(bd_log_rate_delta(kAnchor, test), delta, 1e-10);
  EXPECT_NEAR(bd_rate(kAnchor, test), 100 * (std::pow(10.0, delta) - 1), 1e-8);
}

TEST(BdRate, UnsortedInputIsSortedByCurveHelper) {
  RdCurve c = kAnchor;
  std::swap(c.points[0], c.points[3]);
  EXPECT_THROW(c.validate(), PreconditionError);
  c.sort();
  EXPECT_NO_THROW(c.validate());
}

TEST(BdRate, RejectsBadCurves) {
  RdCurve few = kAnchor;
  few.points.resize(3);
  EXPECT_THROW(bd_rate(kAnchor, few), PreconditionError);

  RdCurve zero = kAnchor;
  zero.points[0].rate = 0;
  EXPECT_THROW(bd_rate(kAnchor, zero), PreconditionError);

  RdCurve repeated = kAnchor;
  repeated.points[1].rate = repeated.points[0].rate;
  EXPECT_THROW(bd_rate(kAnchor, repeated), PreconditionError);

  const RdCurve far = curve_from([](double q) { return 0.08 * q - 3.5; }, {50, 52, 54, 56});
  EXPECT_THROW(bd_rate(kAnchor, far), PreconditionError);
}

SequenceReport fake_report(const std::string& policy, const std::string& seq, int qi, std::uint64_t bits,
                           double psnr, std::uint64_t me_macs) {
  SequenceReport r;
  r.sequence_id = seq;
  r.policy = policy;
  r.q_index = qi;
  r.width = 100;
  r.height = 10;
  r.num_frames = 10;
  r.total_bits = bits;
  r.mean_psnr = psnr;
  r.ops.charge(OpCategory::MeSearch, me_macs);
  r.ops.add_pixels(10000);
  FrameReport f;
  f.type = FrameType::B;
  f.temporal_level = 1;
  f.s_factor = policy == "FixedS1" ? 1 : 8;
  r.frames.push_back(f);
  return r;
}

TEST(Summary, PerSequenceMeanAgainstAnchor) {
  std::vector<SequenceReport> reps;
  const std::array<double, 4> psnr = {30, 33, 36, 39};
  const std::array<std::uint64_t, 4> bits = {10000, 20000, 40000, 80000};
  for (int qi = 0; qi < 4; ++qi) {
    reps.push_back(fake_report("FixedS1", "a", qi, bits[std::size_t(qi)], psnr[std::size_t(qi)], 5'000'000));
    reps.push_back(fake_report("FixedS1", "b", qi, bits[std::size_t(qi)], psnr[std::size_t(qi)], 5'000'000));
    // 20% more bits on a, 20% fewer on b.
    reps.push_back(fake_report("Other", "a", qi, bits[std::size_t(qi)] * 12 / 10, psnr[std::size_t(qi)], 1'000'000));
    reps.push_back(fake_report("Other", "b", qi, bits[std::size_t(qi)] * 8 / 10, psnr[std::size_t(qi)], 1'000'000));
  }
  const auto rows = summarize(reps);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].policy, "FixedS1");
  EXPECT_NEAR(rows[0].bd_rate_pct, 0.0, 1e-9);
  EXPECT_NEAR(rows[1].bd_rate_pct, 0.0, 1e-6);  // (+20 - 20) / 2
  ASSERT_EQ(rows[1].per_sequence_bd.size(), 2u);
  EXPECT_NEAR(rows[1].per_sequence_bd[0].second, 20.0, 1e-6);
  EXPECT_NEAR(rows[1].per_sequence_bd[1].second, -20.0, 1e-6);
  EXPECT_DOUBLE_EQ(rows[0].kmac_total(), 0.5);
  EXPECT_DOUBLE_EQ(rows[1].kmac_me(), 0.1);
  EXPECT_EQ(rows[0].s_histogram[0][0], 8);
  EXPECT_EQ(rows[1].s_histogram[0][3], 8);
  EXPECT_DOUBLE_EQ(rows[1].coarse_share_l12(), 1.0);
  EXPECT_DOUBLE_EQ(rows[0].coarse_share_l12(), 0.0);

  const std::string csv = rdc_table_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "policy,bd_rate_pct,kmac_total,kmac_me,kmac_classifier,s_histogram_l1,s_histogram_l2,"
            "s_histogram_l3,s_histogram_l4");
  EXPECT_NE(csv.find("FixedS1,0.0000,0.5000,0.5000,0.0000,8/0/0/0,0/0/0/0"), std::string::npos);
  EXPECT_NE(rd_points_csv(reps).find("Other,b,3,"), std::string::npos);
  EXPECT_NE(kmac_breakdown(rows).find("# Other\n"), std::string::npos);
}

TEST(KmacReport, ShareOfTotal) {
  OpCounter c;
  c.charge(OpCategory::MeSearch, 3000);
  c.charge(OpCategory::Transform, 1000);
  c.add_pixels(2);
  const auto rows = report_kmac(c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].category, "me_search");
  EXPECT_DOUBLE_EQ(rows[0].kmac_per_pixel, 1.5);
  EXPECT_DOUBLE_EQ(rows[0].percent, 75.0);
  EXPECT_NE(format_kmac_table(c).find("me_search\t1.500\t75.0%"), std::string::npos);
}

TEST(ReportJson, RoundTripsRealEncode) {
  SyntheticSpec spec;
  spec.velocity_x = 2.0;
  const Sequence seq = gen_synthetic(spec);
  const GopPlan plan = build_gop_plan(33);
  EncodeOutcome out = encode_sequence(seq, plan, make_decider(MemcPolicy{}), QuantConfig::from_index(2));
  out.report.sequence_id = "s";
  out.report.policy = "MEMC";
  const auto j = report_to_json(out.report);
  const SequenceReport back = report_from_json(j);
  EXPECT_EQ(report_to_json(back).dump(), j.dump());
  EXPECT_EQ(back.total_bits, out.report.total_bits);
  EXPECT_EQ(back.ops.total(), out.report.ops.total());
  EXPECT_EQ(back.frames.size(), 33u);
}

}  // namespace
}  // namespace fastmra

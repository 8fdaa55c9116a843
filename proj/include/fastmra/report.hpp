#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fastmra/bdrate.hpp"
#include "fastmra/codec.hpp"

namespace fastmra {

// ---- JSON form of sequence reports --------------------------------------

inline nlohmann::ordered_json report_to_json(const SequenceReport& r) {
  nlohmann::ordered_json ops = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kOpCategoryNames.size(); ++i)
    ops[kOpCategoryNames[i]] = r.ops.count(static_cast<OpCategory>(i));
  ops["pixel_base"] = r.ops.pixel_base();

  // Frames as rows: coding_order, display_index, type, level, S, rate_bits,
  // distortion_sse, j_cost, psnr, cumulative_bits.
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& f : r.frames)
    frames.push_back({f.coding_order, f.display_index, int(f.type), f.temporal_level, f.s_factor,
                      f.rd.rate_bits, f.rd.distortion_sse, f.rd.j_cost, f.psnr, f.cumulative_bits});
  return {{"sequence_id", r.sequence_id}, {"policy", r.policy},   {"q_index", r.q_index},
          {"width", r.width},             {"height", r.height},   {"num_frames", r.num_frames},
          {"total_bits", r.total_bits},   {"bpp", r.bpp()},       {"mean_psnr", r.mean_psnr},
          {"ops", ops},                   {"frames", frames}};
}

inline SequenceReport report_from_json(const nlohmann::ordered_json& j) {
  SequenceReport r;
  r.sequence_id = j.at("sequence_id").get<std::string>();
  r.policy = j.at("policy").get<std::string>();
  r.q_index = j.at("q_index").get<int>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  r.num_frames = j.at("num_frames").get<int>();
  r.total_bits = j.at("total_bits").get<std::uint64_t>();
  r.mean_psnr = j.at("mean_psnr").get<double>();
  const auto& ops = j.at("ops");
  for (std::size_t i = 0; i < kOpCategoryNames.size(); ++i)
    r.ops.charge(static_cast<OpCategory>(i), ops.at(kOpCategoryNames[i]).get<std::uint64_t>());
  r.ops.add_pixels(ops.at("pixel_base").get<std::uint64_t>());
  for (const auto& row : j.at("frames")) {
    FrameReport f;
    f.coding_order = row.at(0).get<int>();
    f.display_index = row.at(1).get<int>();
    f.type = static_cast<FrameType>(row.at(2).get<int>());
    f.temporal_level = row.at(3).get<int>();
    f.s_factor = row.at(4).get<int>();
    f.rd.s_factor = f.s_factor;
    f.rd.rate_bits = row.at(5).get<std::uint64_t>();
    f.rd.distortion_sse = row.at(6).get<std::uint64_t>();
    f.rd.j_cost = row.at(7).get<double>();
    f.psnr = row.at(8).get<double>();
    f.cumulative_bits = row.at(9).get<std::uint64_t>();
    r.frames.push_back(f);
  }
  return r;
}

// ---- RD-complexity summary ----------------------------------------------

inline RdCurve rd_curve(std::vector<const SequenceReport*> reports) {
  RdCurve c;
  for (const auto* r : reports) c.points.push_back({r->bpp(), r->mean_psnr});
  c.sort();
  return c;
}

struct PolicySummary {
  std::string policy;
  double bd_rate_pct = std::nan("");  // mean over sequences against the anchor
  std::vector<std::pair<std::string, double>> per_sequence_bd;
  OpCounter ops;
  std::array<std::array<int, 4>, 4> s_histogram{};  // [level-1][scale index], levels 1..4

  double kmac_total() const { return ops.kmac_per_pixel(); }
  double kmac_me() const { return ops.kmac_per_pixel(OpCategory::MeSearch); }
  double kmac_classifier() const { return ops.kmac_per_pixel(OpCategory::ClassifierForward); }
  // Share of level-1/2 B frames coded with S >= 4.
  double coarse_share_l12() const {
    int coarse = 0, all = 0;
    for (int l = 0; l < 2; ++l)
      for (int i = 0; i < 4; ++i) {
        all += s_histogram[std::size_t(l)][std::size_t(i)];
        if (i >= 2) coarse += s_histogram[std::size_t(l)][std::size_t(i)];
      }
    return all ? double(coarse) / all : 0.0;
  }
};

inline constexpr const char* kAnchorPolicy = "FixedS1";

// Groups reports by policy (first-appearance order) and compares each
// sequence's RD curve with the anchor policy's curve for the same sequence.
inline std::vector<PolicySummary> summarize(const std::vector<SequenceReport>& reports,
                                            const std::string& anchor = kAnchorPolicy) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::vector<const SequenceReport*>>> by;
  for (const auto& r : reports) {
    if (!by.count(r.policy)) order.push_back(r.policy);
    by[r.policy][r.sequence_id].push_back(&r);
  }
  std::vector<PolicySummary> out;
  for (const auto& name : order) {
    PolicySummary s;
    s.policy = name;
    double bd_sum = 0;
    int bd_n = 0;
    for (const auto& [seq, runs] : by[name]) {
      for (const auto* r : runs) {
        s.ops += r->ops;
        for (const auto& f : r->frames)
          if (f.type == FrameType::B && f.temporal_level <= 4)
            s.s_histogram[std::size_t(f.temporal_level - 1)][std::size_t(scale_index(f.s_factor))]++;
      }
      auto a = by.find(anchor);
      if (a == by.end() || !a->second.count(seq)) continue;
      const double bd = bd_rate(rd_curve(a->second.at(seq)), rd_curve(runs));
      s.per_sequence_bd.emplace_back(seq, bd);
      bd_sum += bd;
      ++bd_n;
    }
    if (bd_n) s.bd_rate_pct = bd_sum / bd_n;
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {
inline std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace detail

inline std::string rdc_table_csv(const std::vector<PolicySummary>& rows) {
  std::string out =
      "policy,bd_rate_pct,kmac_total,kmac_me,kmac_classifier,s_histogram_l1,s_histogram_l2,"
      "s_histogram_l3,s_histogram_l4\n";
  for (const auto& r : rows) {
    out += r.policy + ',' + detail::fixed(r.bd_rate_pct, 4) + ',' + detail::fixed(r.kmac_total(), 4) + ',' +
           detail::fixed(r.kmac_me(), 4) + ',' + detail::fixed(r.kmac_classifier(), 4);
    for (const auto& level : r.s_histogram) {
      out += ',';
      for (std::size_t i = 0; i < 4; ++i) out += (i ? "/" : "") + std::to_string(level[i]);
    }
    out += '\n';
  }
  return out;
}

inline std::string rd_points_csv(const std::vector<SequenceReport>& reports) {
  std::string out = "policy,sequence,q_index,bpp,psnr\n";
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%d,%.8f,%.6f\n", r.q_index, r.bpp(), r.mean_psnr);
    out += r.policy + ',' + r.sequence_id + buf;
  }
  return out;
}

// Per-category kMAC/pixel breakdown for each policy.
inline std::string kmac_breakdown(const std::vector<PolicySummary>& rows) {
  std::string out;
  for (const auto& r : rows) out += "# " + r.policy + '\n' + format_kmac_table(r.ops);
  return out;
}

}  // namespace fastmra

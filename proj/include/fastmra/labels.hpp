#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fastmra/error.hpp"
#include "fastmra/hash.hpp"
#include "fastmra/motion.hpp"

namespace fastmra {

using Prob4 = std::array<double, 4>;

inline constexpr double kDefaultLambdaSoften = 10.0;

// softmax(lambda * a_i) with a_i = (max - rd_i) / max. Entries flagged in
// `skip` take probability 0 and do not enter the maximum.
inline Prob4 soften_label(const Prob4& rd, double lambda_soften = kDefaultLambdaSoften,
                          const std::array<bool, 4>& skip = {}) {
  double rd_max = 0;
  int live = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (skip[i]) continue;
    if (!std::isfinite(rd[i]) || rd[i] <= 0)
      throw PreconditionError("RD cost must be positive and finite, got " + std::to_string(rd[i]));
    rd_max = std::max(rd_max, rd[i]);
    ++live;
  }
  if (live == 0) throw PreconditionError("soften_label needs at least one RD cost");

  Prob4 logit{};
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 4; ++i) {
    if (skip[i]) continue;
    logit[i] = lambda_soften * (rd_max - rd[i]) / rd_max;
    top = std::max(top, logit[i]);
  }
  Prob4 out{};
  double z = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (skip[i]) continue;
    out[i] = std::exp(logit[i] - top);
    z += out[i];
  }
  for (auto& p : out) p /= z;
  return out;
}

inline double entropy_bits(std::span<const double> p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

// 2 - H2(soft): 0 for a uniform label, 2 for a one-hot one.
inline double entropy_weight(const Prob4& soft) {
  return std::clamp(2.0 - entropy_bits(soft), 0.0, 2.0);
}

// Argmin over RD costs; equal costs resolve to the larger factor.
inline int hard_label(const Prob4& rd, const std::array<bool, 4>& skip = {}) {
  int best = -1;
  for (int i = 0; i < 4; ++i) {
    if (skip[std::size_t(i)]) continue;
    if (best < 0 || rd[std::size_t(i)] <= rd[std::size_t(best)]) best = i;
  }
  if (best < 0) throw PreconditionError("hard_label needs at least one RD cost");
  return best;
}

struct LabelRecord {
  std::string sequence_id;
  int display_index = 0;
  int temporal_level = 0;
  int q_index = 0;
  Prob4 rd_costs{};
  std::array<bool, 4> skipped{};
  int hard = 0;  // index into {1,2,4,8}
  Prob4 soft{};
  double weight = 0;
  std::uint64_t input_digest = 0;

  int hard_scale() const { return scale_from_index(hard); }
  bool operator==(const LabelRecord&) const = default;
};

inline LabelRecord make_label(std::string sequence_id, int display_index, int level, int q_index,
                              const Prob4& rd, const std::array<bool, 4>& skipped,
                              std::uint64_t digest, double lambda_soften = kDefaultLambdaSoften) {
  LabelRecord r;
  r.sequence_id = std::move(sequence_id);
  r.display_index = display_index;
  r.temporal_level = level;
  r.q_index = q_index;
  r.rd_costs = rd;
  r.skipped = skipped;
  r.hard = hard_label(rd, skipped);
  r.soft = soften_label(rd, lambda_soften, skipped);
  r.weight = entropy_weight(r.soft);
  r.input_digest = digest;
  return r;
}

// Digest of the classifier's raw inputs: current frame then both references.
inline std::uint64_t input_digest(const Frame& x, const Frame& past, const Frame& future) {
  const Frame* f[] = {&x, &past, &future};
  return frames_digest(f);
}

struct LabelSet {
  double lambda_soften = kDefaultLambdaSoften;
  std::vector<LabelRecord> records;
};

inline constexpr int kLabelFormatVersion = 1;
inline constexpr const char* kLabelColumns =
    "seq_id,display_index,level,q_index,rd1,rd2,rd4,rd8,hard,soft1,soft2,soft3,soft4,weight,"
    "input_digest";

namespace detail {

inline std::string fmt17(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw FormatError("bad real field '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw FormatError("bad integer field '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline std::string serialize_labels(const LabelSet& set) {
  std::string out = "fastmra_labels,version=" + std::to_string(kLabelFormatVersion) +
                    ",lambda_soften=" + detail::fmt17(set.lambda_soften) + "\n";
  out += kLabelColumns;
  out += '\n';
  for (const auto& r : set.records) {
    if (r.sequence_id.find_first_of(",\n") != std::string::npos)
      throw PreconditionError("sequence id may not contain ',' or newline: " + r.sequence_id);
    out += r.sequence_id + ',' + std::to_string(r.display_index) + ',' +
           std::to_string(r.temporal_level) + ',' + std::to_string(r.q_index);
    for (std::size_t i = 0; i < 4; ++i)
      out += ',' + (r.skipped[i] ? std::string("inf") : detail::fmt17(r.rd_costs[i]));
    out += ',' + std::to_string(r.hard);
    for (double p : r.soft) out += ',' + detail::fmt17(p);
    out += ',' + detail::fmt17(r.weight) + ',' + to_hex(r.input_digest) + '\n';
  }
  return out;
}

inline LabelSet parse_labels(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  LabelSet set;
  if (!std::getline(in, line) || line.rfind("fastmra_labels,", 0) != 0)
    throw FormatError("not a label file");
  const auto head = detail::split(line, ',');
  if (head.size() != 3 || head[1] != "version=" + std::to_string(kLabelFormatVersion) ||
      head[2].rfind("lambda_soften=", 0) != 0)
    throw FormatError("unsupported label header: " + line);
  set.lambda_soften = detail::parse_real(head[2].substr(14));
  if (!std::getline(in, line) || line != kLabelColumns) throw FormatError("label column header mismatch");

  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = detail::split(line, ',');
    if (f.size() != 15)
      throw FormatError("label line " + std::to_string(line_no) + ": expected 15 fields, got " +
                        std::to_string(f.size()));
    LabelRecord r;
    r.sequence_id = f[0];
    r.display_index = int(detail::parse_int(f[1]));
    r.temporal_level = int(detail::parse_int(f[2]));
    r.q_index = int(detail::parse_int(f[3]));
    for (std::size_t i = 0; i < 4; ++i) {
      r.skipped[i] = f[4 + i] == "inf";
      r.rd_costs[i] = detail::parse_real(f[4 + i]);
    }
    r.hard = int(detail::parse_int(f[8]));
    for (std::size_t i = 0; i < 4; ++i) r.soft[i] = detail::parse_real(f[9 + i]);
    r.weight = detail::parse_real(f[13]);
    if (f[14].size() != 16) throw FormatError("label line " + std::to_string(line_no) + ": bad digest");
    r.input_digest = std::stoull(f[14], nullptr, 16);
    if (r.hard < 0 || r.hard > 3 || r.temporal_level < 1 || r.temporal_level > 4)
      throw FormatError("label line " + std::to_string(line_no) + ": field out of range");
    set.records.push_back(std::move(r));
  }
  return set;
}

// Class census: counts[level][class index] over levels 1..4.
struct LabelCensus {
  std::array<std::array<int, 4>, 5> counts{};
  std::string format() const {
    std::string out = "level\tS=1\tS=2\tS=4\tS=8\n";
    for (int l = 1; l <= 4; ++l) {
      out += std::to_string(l);
      for (int c : counts[std::size_t(l)]) out += '\t' + std::to_string(c);
      out += '\n';
    }
    return out;
  }
};

inline LabelCensus census(const std::vector<LabelRecord>& records) {
  LabelCensus c;
  for (const auto& r : records) c.counts.at(std::size_t(r.temporal_level)).at(std::size_t(r.hard))++;
  return c;
}

}  // namespace fastmra

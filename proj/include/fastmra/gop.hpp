#pragma once

#include <bit>
#include <cstdio>
#include <string>
#include <vector>

#include "error.hpp"

namespace fastmra {

enum class FrameType { Intra = 0, B = 1 };

inline constexpr int kNumTemporalLevels = 5;

struct GopEntry {
  int display_index = 0;
  FrameType type = FrameType::Intra;
  int temporal_level = 0;  // 0 for intra, 1..5 for B
  int ref_past = -1;
  int ref_future = -1;
  int ref_distance = 0;  // k

  bool operator==(const GopEntry&) const = default;
};

// Level of a B frame whose references sit k frames away: 5 - log2(k).
inline int temporal_level_of(int k) {
  if (k < 1 || k > 16 || !std::has_single_bit(static_cast<unsigned>(k)))
    throw PreconditionError("reference distance " + std::to_string(k) +
                            " is not one of 1, 2, 4, 8, 16");
  return kNumTemporalLevels - std::countr_zero(static_cast<unsigned>(k));
}

struct GopPlan {
  int num_frames = 0;
  std::vector<GopEntry> entries;  // coding order

  // Histogram of B frames by temporal level (index 0 unused).
  std::vector<int> level_histogram() const {
    std::vector<int> h(kNumTemporalLevels + 1, 0);
    for (const auto& e : entries)
      if (e.type == FrameType::B) ++h[static_cast<std::size_t>(e.temporal_level)];
    return h;
  }

  std::string dump() const {
    std::string out = "coding_order\tdisplay_index\ttype\tlevel\tref_past\tref_future\n";
    char line[128];
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      std::snprintf(line, sizeof line, "%zu\t%d\t%s\t%d\t%d\t%d\n", i, e.display_index,
                    e.type == FrameType::Intra ? "I" : "B", e.temporal_level, e.ref_past,
                    e.ref_future);
      out += line;
    }
    return out;
  }
};

// Checks that every frame is coded exactly once, each reference is coded
// before its user and the per-entry invariants hold.
inline void check_plan(const GopPlan& plan) {
  std::vector<int> coded_at(static_cast<std::size_t>(plan.num_frames), -1);
  if (plan.entries.size() != static_cast<std::size_t>(plan.num_frames))
    throw PreconditionError("plan does not cover every frame");
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& e = plan.entries[i];
    if (e.display_index < 0 || e.display_index >= plan.num_frames)
      throw PreconditionError("plan entry outside the sequence");
    if (coded_at[static_cast<std::size_t>(e.display_index)] >= 0)
      throw PreconditionError("frame " + std::to_string(e.display_index) + " coded twice");
    if (e.type == FrameType::Intra) {
      if (e.temporal_level != 0 || e.ref_past != -1 || e.ref_future != -1)
        throw PreconditionError("intra entry with references");
    } else {
      const int k = e.ref_distance;
      if (e.ref_past != e.display_index - k || e.ref_future != e.display_index + k)
        throw PreconditionError("B entry references are not symmetric");
      if (e.temporal_level != temporal_level_of(k))
        throw PreconditionError("B entry level inconsistent with its distance");
      for (int r : {e.ref_past, e.ref_future})
        if (r < 0 || r >= plan.num_frames || coded_at[static_cast<std::size_t>(r)] < 0)
          throw PreconditionError("frame " + std::to_string(e.display_index) +
                                  " references uncoded frame " + std::to_string(r));
    }
    coded_at[static_cast<std::size_t>(e.display_index)] = static_cast<int>(i);
  }
}

// Closed-GOP dyadic hierarchy. Every GOP boundary is an intra frame, so the
// intra period has to equal the GOP size.
inline GopPlan build_gop_plan(int num_frames, int intra_period = 32, int gop_size = 32) {
  if (gop_size < 2 || gop_size > 32 || !std::has_single_bit(static_cast<unsigned>(gop_size)))
    throw PreconditionError("gop_size must be one of 2, 4, 8, 16, 32");
  if (intra_period != gop_size)
    throw PreconditionError("closed GOPs need intra_period == gop_size");
  if (num_frames < 1 || num_frames % intra_period != 1)
    throw PreconditionError("num_frames must be 1 modulo the intra period, got " +
                            std::to_string(num_frames));

  GopPlan plan;
  plan.num_frames = num_frames;
  plan.entries.push_back({0, FrameType::Intra, 0, -1, -1, 0});
  for (int start = 0; start + gop_size < num_frames; start += gop_size) {
    plan.entries.push_back({start + gop_size, FrameType::Intra, 0, -1, -1, 0});
    for (int k = gop_size / 2; k >= 1; k /= 2)
      for (int d = start + k; d < start + gop_size; d += 2 * k)
        plan.entries.push_back({d, FrameType::B, temporal_level_of(k), d - k, d + k, k});
  }
  return plan;
}

}  // namespace fastmra

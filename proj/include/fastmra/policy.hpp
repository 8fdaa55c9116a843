#pragma once

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fastmra/codec.hpp"
#include "fastmra/labels.hpp"
#include "fastmra/learn.hpp"

namespace fastmra {

struct FixedS {
  int s = 1;
};
struct OraclePolicy {};
struct MemcPolicy {};
struct MemcStarPolicy {};
struct BiClassPolicy {
  std::shared_ptr<const ModelSet> models;
};
struct MuClassPolicy {
  std::shared_ptr<const ModelSet> models;
};

using SPolicy =
    std::variant<FixedS, OraclePolicy, MemcPolicy, MemcStarPolicy, BiClassPolicy, MuClassPolicy>;

inline std::string policy_name(const SPolicy& p) {
  struct Namer {
    std::string operator()(const FixedS& f) const { return "FixedS" + std::to_string(f.s); }
    std::string operator()(const OraclePolicy&) const { return "Oracle"; }
    std::string operator()(const MemcPolicy&) const { return "MEMC"; }
    std::string operator()(const MemcStarPolicy&) const { return "MEMCStar"; }
    std::string operator()(const BiClassPolicy&) const { return "BiClass"; }
    std::string operator()(const MuClassPolicy&) const { return "MuClass"; }
  };
  return std::visit(Namer{}, p);
}

struct OmraResult {
  int best_s = 0;
  std::array<RdRecord, 4> records{};  // S = 1, 2, 4, 8; skipped scales have infinite cost
  EncodedFrame best;
};

// Encodes the frame at every factor and keeps the lowest j_cost. Scanning
// from fine to coarse with <= makes equal costs resolve to the larger S.
inline OmraResult omra_search(const Frame& x, const Frame& past, const Frame& future,
                              const QuantConfig& qc, OpCounter* ops = nullptr,
                              int range = kDefaultSearchRange) {
  OmraResult out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    const int s = kScales[i];
    try {
      EncodedFrame e = encode_b_frame(x, past, future, s, qc, ops, nullptr, range);
      out.records[i] = e.rd;
      if (e.rd.j_cost <= best) {
        best = e.rd.j_cost;
        out.best_s = s;
        out.best = std::move(e);
      }
    } catch (const ScaleTooCoarse&) {
      out.records[i] = RdRecord::skip(s);
    }
  }
  if (out.best_s == 0) throw ScaleTooCoarse("no downsampling factor fits the frame");
  return out;
}

struct MemcResult {
  int best_s = 0;
  std::vector<std::pair<int, double>> errors;  // (S, luma MSE) per evaluated candidate
  MotionField motion;
};

// Motion estimation and compensation only, compared by luma prediction MSE.
inline MemcResult memc_search(const Frame& x, const Frame& past, const Frame& future,
                              std::span<const int> candidates, OpCounter* ops = nullptr,
                              int range = kDefaultSearchRange) {
  if (candidates.empty()) throw PreconditionError("memc_search needs candidates");
  std::vector<int> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  MemcResult out;
  double best = std::numeric_limits<double>::infinity();
  for (int s : sorted) {
    if (!is_valid_scale(s)) throw PreconditionError("invalid candidate factor " + std::to_string(s));
    try {
      MotionField m = estimate_bidirectional(x, past, future, s, range, ops);
      const double mse = prediction_error(compensate(past, future, upsample_flow(m), ops), x);
      out.errors.emplace_back(s, mse);
      if (mse <= best) {
        best = mse;
        out.best_s = s;
        out.motion = std::move(m);
      }
    } catch (const ScaleTooCoarse&) {
    }
  }
  if (out.best_s == 0) throw ScaleTooCoarse("no candidate factor fits the frame");
  return out;
}

inline constexpr std::array<int, 4> kAllScales = kScales;
inline constexpr std::array<int, 3> kComplexScales = {2, 4, 8};

// Largest factor the frame supports, at most s.
inline int fit_scale(int s, int width, int height) {
  while (s > 1 && (width < kBlockSize * s || height < kBlockSize * s)) s /= 2;
  return s;
}

inline ScaleChoice memc_choice(const BFrameContext& c, std::span<const int> candidates, OpCounter& ops) {
  MemcResult r = memc_search(c.x, c.ref_past, c.ref_future, candidates, &ops, c.search_range);
  ScaleChoice out;
  out.scale = r.best_s;
  out.motion = std::move(r.motion);
  return out;
}

inline ScaleChoice decide_S(const SPolicy& policy, const BFrameContext& c, OpCounter& ops) {
  const int level = c.entry.temporal_level;
  if (const auto* f = std::get_if<FixedS>(&policy)) {
    if (!is_valid_scale(f->s)) throw PreconditionError("invalid fixed factor " + std::to_string(f->s));
    return ScaleChoice{f->s, {}, {}, {}};
  }
  if (std::holds_alternative<OraclePolicy>(policy)) {
    OmraResult r = omra_search(c.x, c.ref_past, c.ref_future, c.qc, &ops, c.search_range);
    ScaleChoice out;
    out.scale = r.best_s;
    out.encoded = std::move(r.best);
    out.candidates.assign(r.records.begin(), r.records.end());
    return out;
  }
  if (std::holds_alternative<MemcPolicy>(policy)) return memc_choice(c, kAllScales, ops);
  if (std::holds_alternative<MemcStarPolicy>(policy)) {
    if (level == 5) return ScaleChoice{1, {}, {}, {}};
    return memc_choice(c, kAllScales, ops);
  }
  if (const auto* bi = std::get_if<BiClassPolicy>(&policy)) {
    if (!bi->models || bi->models->variant != ClassifierVariant::Bi)
      throw PreconditionError("BiClass policy needs Bi-Class models");
    const ClassDecision d = predict_S(*bi->models, c.x, c.ref_past, c.ref_future, level, &ops);
    if (d.cls == 0) return ScaleChoice{1, {}, {}, {}};
    return memc_choice(c, kComplexScales, ops);
  }
  const auto& mu = std::get<MuClassPolicy>(policy);
  if (!mu.models || mu.models->variant != ClassifierVariant::Mu)
    throw PreconditionError("MuClass policy needs Mu-Class models");
  const ClassDecision d = predict_S(*mu.models, c.x, c.ref_past, c.ref_future, level, &ops);
  return ScaleChoice{fit_scale(scale_from_index(d.cls), c.x.width(), c.x.height()), {}, {}, {}};
}

inline ScaleDecider make_decider(SPolicy policy) {
  return [p = std::move(policy)](const BFrameContext& c, OpCounter& ops) { return decide_S(p, c, ops); };
}

using LabelSink = std::function<void(LabelRecord, const ClassifierInput&)>;

// Encodes with the exhaustive search and emits one record per B frame at
// levels 1..4, using the references reconstructed along that encode.
inline EncodeOutcome extract_labels(const Sequence& seq, const std::string& sequence_id,
                                    const GopPlan& plan, const QuantConfig& qc, const LabelSink& sink,
                                    double lambda_soften = kDefaultLambdaSoften,
                                    int range = kDefaultSearchRange) {
  auto observer = [&](const BFrameContext& c, const ScaleChoice& choice, const EncodedFrame&) {
    if (c.entry.temporal_level > 4) return;
    Prob4 rd{};
    std::array<bool, 4> skipped{};
    for (std::size_t i = 0; i < 4; ++i) {
      rd[i] = choice.candidates.at(i).j_cost;
      skipped[i] = choice.candidates[i].skipped;
    }
    sink(make_label(sequence_id, c.entry.display_index, c.entry.temporal_level, qc.q_index, rd, skipped,
                    input_digest(c.x, c.ref_past, c.ref_future), lambda_soften),
         featurize(c.x, c.ref_past, c.ref_future));
  };
  return encode_sequence(seq, plan, make_decider(OraclePolicy{}), qc, observer, range);
}

}  // namespace fastmra

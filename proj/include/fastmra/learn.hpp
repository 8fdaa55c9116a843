#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fastmra/error.hpp"
#include "fastmra/hash.hpp"
#include "fastmra/io.hpp"
#include "fastmra/labels.hpp"
#include "fastmra/nn.hpp"
#include "fastmra/ops.hpp"

namespace fastmra {

enum class ClassifierVariant { Bi, Mu };
enum class LevelBinding { Shared, PerLevel };

inline const char* to_string(ClassifierVariant v) { return v == ClassifierVariant::Bi ? "bi" : "mu"; }
inline const char* to_string(LevelBinding b) { return b == LevelBinding::Shared ? "shared" : "per_level"; }

inline ClassifierVariant variant_from_string(const std::string& s) {
  if (s == "bi") return ClassifierVariant::Bi;
  if (s == "mu") return ClassifierVariant::Mu;
  throw PreconditionError("unknown classifier variant '" + s + "'");
}

inline LevelBinding binding_from_string(const std::string& s) {
  if (s == "shared") return LevelBinding::Shared;
  if (s == "per_level") return LevelBinding::PerLevel;
  throw PreconditionError("unknown level binding '" + s + "'");
}

inline int num_classes_of(ClassifierVariant v) { return v == ClassifierVariant::Bi ? 2 : 4; }

// Class index of a label. Both variants use class 0 for S = 1: Bi-Class
// splits {S=1} ("static") from {2,4,8} ("complex").
inline int target_class(ClassifierVariant v, const LabelRecord& r) {
  return v == ClassifierVariant::Mu ? r.hard : (r.hard == 0 ? 0 : 1);
}

// ---- losses -------------------------------------------------------------

inline constexpr double kProbClamp = 1e-12;

struct LossResult {
  double loss = 0;
  std::vector<double> dlogits;
  bool clamped = false;
};

// alpha_t * (1 - p_t)^gamma * (-ln p_t), gradient taken through softmax.
inline LossResult focal_loss(std::span<const double> probs, int label, double gamma,
                             std::span<const double> alpha) {
  if (label < 0 || std::size_t(label) >= probs.size()) throw PreconditionError("label out of range");
  if (alpha.size() != probs.size()) throw PreconditionError("alpha needs one entry per class");
  if (gamma < 0) throw PreconditionError("focal gamma must be non-negative");
  LossResult r;
  double pt = probs[std::size_t(label)];
  if (pt < kProbClamp) {
    pt = kProbClamp;
    r.clamped = true;
  }
  const double a = alpha[std::size_t(label)];
  const double one_minus = 1.0 - pt;
  const double f = gamma == 0 ? 1.0 : std::pow(one_minus, gamma);
  const double log_pt = std::log(pt);
  r.loss = -a * f * log_pt;
  // dL/dz_j = -a * (f + p_t ln(p_t) f'(p_t)) * (delta_jt - p_j), f' = -gamma (1-p_t)^(gamma-1)
  double fprime_term = 0;
  if (gamma != 0 && one_minus > 0) fprime_term = -gamma * std::pow(one_minus, gamma - 1) * pt * log_pt;
  const double g = -a * (f + fprime_term);
  r.dlogits.resize(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j)
    r.dlogits[j] = g * ((int(j) == label ? 1.0 : 0.0) - probs[j]);
  return r;
}

inline double cross_entropy(std::span<const double> probs, int label) {
  return -std::log(std::max(probs[std::size_t(label)], kProbClamp));
}

// (2 - H2(soft)) * CE(p, soft); the weight is constant w.r.t. the model.
inline LossResult mu_loss(std::span<const double> probs, std::span<const double> soft) {
  if (probs.size() != soft.size()) throw PreconditionError("soft label size mismatch");
  LossResult r;
  const double w = std::clamp(2.0 - entropy_bits(soft), 0.0, 2.0);
  double ce = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (soft[i] == 0) continue;
    double p = probs[i];
    if (p < kProbClamp) {
      p = kProbClamp;
      r.clamped = true;
    }
    ce -= soft[i] * std::log(p);
  }
  r.loss = w * ce;
  r.dlogits.resize(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) r.dlogits[j] = w * (probs[j] - soft[j]);
  return r;
}

using LossFn = std::function<LossResult(std::span<const double> probs)>;

// ---- gradient check -----------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // perturbation flipped a ReLU; differences are invalid there
};

// Relative errors use max(|analytic|, |numeric|, kGradCheckFloor) as the
// denominator so parameters with vanishing gradient compare absolutely.
// Parameters are drawn in a seeded random order until `samples` of them
// have been compared.
inline constexpr double kGradCheckFloor = 1e-6;

inline GradCheckResult grad_check(std::span<const float> params, int num_classes, const LossFn& loss,
                                  const ClassifierInput& input, std::size_t samples = 200,
                                  double h = 1e-4, std::uint64_t seed = 1) {
  std::vector<double> p(params.begin(), params.end());
  Network<double> net(num_classes);
  std::vector<double> analytic(p.size(), 0.0);
  const auto probs = net.forward(p, input);
  const LossResult base = loss(probs);
  net.backward(p, base.dlogits, analytic);
  const auto mask = net.relu_mask();

  Rng rng(seed);
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);

  GradCheckResult out;
  for (std::size_t i : idx) {
    if (out.checked == samples) break;
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss(net.forward(p, input)).loss;
    bool kink = net.relu_mask() != mask;
    p[i] = keep - h;
    const double down = loss(net.forward(p, input)).loss;
    kink = kink || net.relu_mask() != mask;
    p[i] = keep;
    if (kink) {
      ++out.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    ++out.checked;
  }
  return out;
}

// ---- models -------------------------------------------------------------

struct ClassifierModel {
  ClassifierVariant variant = ClassifierVariant::Bi;
  int level = 0;  // 0: shared across levels 1..4
  std::uint64_t seed = 0;
  std::vector<float> params;

  int num_classes() const { return num_classes_of(variant); }
  void validate() const {
    if (params.size() != parameter_count(num_classes()))
      throw FormatError("model has " + std::to_string(params.size()) + " parameters, expected " +
                        std::to_string(parameter_count(num_classes())));
    for (float v : params)
      if (!std::isfinite(v)) throw FormatError("model has a non-finite parameter");
    if (level < 0 || level > 4) throw FormatError("model level binding out of range");
  }
  bool operator==(const ClassifierModel&) const = default;
};

struct ModelSet {
  ClassifierVariant variant = ClassifierVariant::Bi;
  LevelBinding binding = LevelBinding::Shared;
  std::vector<ClassifierModel> models;  // one shared, or levels 1..4 in order

  const ClassifierModel& for_level(int level) const {
    if (level < 1 || level > 4) throw PreconditionError("classifiers cover levels 1..4 only");
    if (binding == LevelBinding::Shared) return models.at(0);
    return models.at(std::size_t(level - 1));
  }
  void validate() const {
    const std::size_t want = binding == LevelBinding::Shared ? 1 : 4;
    if (models.size() != want) throw FormatError("model set needs " + std::to_string(want) + " models");
    for (std::size_t i = 0; i < models.size(); ++i) {
      models[i].validate();
      if (models[i].variant != variant) throw FormatError("model variant mismatch in set");
      const int level = binding == LevelBinding::Shared ? 0 : int(i) + 1;
      if (models[i].level != level) throw FormatError("model level binding mismatch in set");
    }
  }
};

inline std::vector<double> infer(const ClassifierModel& m, const ClassifierInput& in) {
  Network<float> net(m.num_classes());
  const auto p = net.forward(m.params, in);
  return {p.begin(), p.end()};
}

// Ties go to the higher class index (coarser scale for Mu-Class).
inline int argmax_class(std::span<const double> probs) {
  int best = 0;
  for (int i = 1; i < int(probs.size()); ++i)
    if (probs[std::size_t(i)] >= probs[std::size_t(best)]) best = i;
  return best;
}

struct ClassDecision {
  int cls = 0;
  bool inferred = false;
};

// Level 5 resolves to class 0 (S = 1) without running the network.
inline ClassDecision predict_S(const ModelSet& set, const Frame& x, const Frame& past,
                               const Frame& future, int level, OpCounter* ops = nullptr) {
  if (level == 5) return {0, false};
  const ClassifierModel& m = set.for_level(level);
  const auto probs = infer(m, featurize(x, past, future));
  if (ops) ops->charge(OpCategory::ClassifierForward, forward_macs(m.num_classes()));
  return {argmax_class(probs), true};
}

// ---- checkpoints --------------------------------------------------------

inline std::string model_stem(const ClassifierModel& m) {
  return std::string(to_string(m.variant)) + (m.level == 0 ? "_shared" : "_level" + std::to_string(m.level));
}

inline std::string params_payload(const ClassifierModel& m) {
  std::string bytes;
  bytes.reserve(m.params.size() * 4);
  for (float v : m.params) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    for (int b = 0; b < 4; ++b) bytes.push_back(char((u >> (8 * b)) & 0xff));
  }
  return bytes;
}

inline std::string manifest_text(const ClassifierModel& m, const std::string& payload) {
  std::ostringstream out;
  out << "fastmra_checkpoint 1\n"
      << "architecture " << kArchitectureId << '\n'
      << "variant " << to_string(m.variant) << '\n'
      << "num_classes " << m.num_classes() << '\n'
      << "level_binding " << (m.level == 0 ? std::string("shared") : "level" + std::to_string(m.level)) << '\n'
      << "seed " << m.seed << '\n'
      << "parameter_count " << m.params.size() << '\n'
      << "checksum " << to_hex(fnv1a64(payload)) << '\n';
  return out.str();
}

// Writes <dir>/<stem>.manifest and <dir>/<stem>.params; returns the manifest path.
inline std::filesystem::path save_checkpoint(const ClassifierModel& m, const std::filesystem::path& dir) {
  m.validate();
  const std::string payload = params_payload(m);
  const auto stem = dir / model_stem(m);
  write_file_atomic(stem.string() + ".params", payload);
  write_file_atomic(stem.string() + ".manifest", manifest_text(m, payload));
  return stem.string() + ".manifest";
}

inline ClassifierModel load_checkpoint(const std::filesystem::path& manifest) {
  std::istringstream in(read_file(manifest));
  std::map<std::string, std::string> kv;
  std::string key, value, line;
  std::getline(in, line);
  if (line != "fastmra_checkpoint 1") throw FormatError(manifest.string() + ": not a checkpoint manifest");
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    if (ls >> key >> value) kv[key] = value;
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(manifest.string() + ": missing " + k);
    return it->second;
  };
  if (need("architecture") != kArchitectureId)
    throw FormatError(manifest.string() + ": unknown architecture " + need("architecture"));
  ClassifierModel m;
  m.variant = variant_from_string(need("variant"));
  if (std::stoi(need("num_classes")) != m.num_classes()) throw FormatError("class count disagrees with variant");
  const std::string binding = need("level_binding");
  if (binding == "shared")
    m.level = 0;
  else if (binding.size() == 6 && binding.rfind("level", 0) == 0 && binding[5] >= '1' && binding[5] <= '4')
    m.level = binding[5] - '0';
  else
    throw FormatError(manifest.string() + ": bad level binding " + binding);
  m.seed = std::stoull(need("seed"));
  const std::size_t count = std::stoull(need("parameter_count"));

  auto params_path = manifest;
  params_path.replace_extension(".params");
  const std::string payload = read_file(params_path);
  if (payload.size() != count * 4)
    throw FormatError(params_path.string() + ": payload holds " + std::to_string(payload.size() / 4) +
                      " parameters, manifest says " + std::to_string(count));
  if (to_hex(fnv1a64(payload)) != need("checksum"))
    throw FormatError(params_path.string() + ": checksum mismatch");
  m.params.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(std::uint8_t(payload[i * 4 + std::size_t(b)])) << (8 * b);
    std::memcpy(&m.params[i], &u, 4);
  }
  m.validate();
  return m;
}

// ---- training -----------------------------------------------------------

struct LossConfig {
  double gamma = 2.0;
  double lambda_soften = kDefaultLambdaSoften;
  double learning_rate = 0.03;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 40;
  std::uint64_t seed = 1;

  void validate() const {
    if (gamma < 0) throw PreconditionError("gamma must be >= 0");
    if (!(learning_rate > 0) || batch_size < 1 || epochs < 1 || momentum < 0 || momentum >= 1)
      throw PreconditionError("invalid optimiser settings");
  }
};

struct Example {
  LabelRecord label;
  ClassifierInput input;
};

// Every fifth sequence id in hash order is held out, so the split is
// sequence-disjoint and exactly 20% of sequences.
inline std::set<std::string> validation_sequences(const std::vector<Example>& data) {
  std::set<std::string> ids;
  for (const auto& e : data) ids.insert(e.label.sequence_id);
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  for (const auto& id : ids) ranked.emplace_back(fnv1a64(id), id);
  std::sort(ranked.begin(), ranked.end());
  std::set<std::string> out;
  for (std::size_t i = 4; i < ranked.size(); i += 5) out.insert(ranked[i].second);
  return out;
}

struct DataSplit {
  std::vector<const Example*> train, validation;
};

inline DataSplit split_examples(const std::vector<Example>& data) {
  const auto held = validation_sequences(data);
  DataSplit s;
  for (const auto& e : data) (held.count(e.label.sequence_id) ? s.validation : s.train).push_back(&e);
  return s;
}

struct EpochLog {
  int level = 0;
  int epoch = 0;
  double train_loss = 0;
  double val_accuracy = 0;
  std::size_t clamp_events = 0;
};

struct Accuracy {
  std::size_t correct = 0, total = 0, majority = 0;
  double value() const { return total ? double(correct) / double(total) : 0.0; }
  double majority_frequency() const { return total ? double(majority) / double(total) : 0.0; }
};

inline Accuracy evaluate(const ModelSet& set, const std::vector<const Example*>& data) {
  Accuracy a;
  std::array<std::size_t, 4> freq{};
  for (const Example* e : data) {
    const int want = target_class(set.variant, e->label);
    const auto probs = infer(set.for_level(e->label.temporal_level), e->input);
    a.correct += argmax_class(probs) == want;
    ++a.total;
    ++freq[std::size_t(want)];
  }
  a.majority = *std::max_element(freq.begin(), freq.end());
  return a;
}

struct TrainResult {
  ModelSet models;
  std::vector<EpochLog> log;
  Accuracy validation;
};

inline std::string class_census_text(ClassifierVariant v, const std::vector<const Example*>& data) {
  std::array<int, 4> n{};
  for (const Example* e : data) ++n[std::size_t(target_class(v, e->label))];
  std::string out;
  for (int c = 0; c < num_classes_of(v); ++c)
    out += (c ? ", " : "") + std::string("class ") + std::to_string(c) + ": " + std::to_string(n[std::size_t(c)]);
  return out;
}

namespace detail {

// Inverse class frequency, normalised to mean 1.
inline std::vector<double> inverse_frequency_alpha(ClassifierVariant v, const std::vector<const Example*>& data) {
  std::vector<double> count(std::size_t(num_classes_of(v)), 0.0);
  for (const Example* e : data) count[std::size_t(target_class(v, e->label))] += 1;
  std::vector<double> a;
  double sum = 0;
  for (double c : count) {
    a.push_back(c > 0 ? double(data.size()) / c : 0.0);
    sum += a.back();
  }
  for (auto& x : a) x *= double(a.size()) / sum;
  return a;
}

inline void require_classes(ClassifierVariant v, int level, const std::vector<const Example*>& data) {
  std::array<int, 4> n{};
  for (const Example* e : data) ++n[std::size_t(target_class(v, e->label))];
  const int present = int(std::count_if(n.begin(), n.end(), [](int c) { return c > 0; }));
  // Focal loss needs both classes for its alpha; soft labels still carry
  // signal for absent hard classes as long as two are present.
  const bool ok = v == ClassifierVariant::Bi ? present == 2 : present >= 2;
  if (!ok)
    throw DataError("training data for " + std::string(to_string(v)) + " classifier" +
                    (level ? " (level " + std::to_string(level) + ")" : std::string()) +
                    " lacks classes; census: " + class_census_text(v, data));
}

inline ClassifierModel train_one(ClassifierVariant v, int level, const std::vector<const Example*>& train,
                                 const std::vector<const Example*>& val, const LossConfig& cfg,
                                 std::vector<EpochLog>& log) {
  require_classes(v, level, train);
  const int nc = num_classes_of(v);
  const std::vector<double> alpha = inverse_frequency_alpha(v, train);
  ClassifierModel m;
  m.variant = v;
  m.level = level;
  m.seed = mix_seed(cfg.seed, std::uint64_t(level));
  m.params = init_parameters(nc, m.seed);

  Network<float> net(nc);
  std::vector<float> grad(m.params.size()), velocity(m.params.size(), 0.0f);
  std::vector<std::size_t> order(train.size());
  std::vector<double> probs(static_cast<std::size_t>(nc));
  std::vector<float> dlogits(static_cast<std::size_t>(nc));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(m.seed, 0x5eed0000ULL + std::uint64_t(epoch)));
    shuffle_rng.shuffle(order);
    EpochLog entry;
    entry.level = level;
    entry.epoch = epoch;
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0f);
      for (std::size_t b = start; b < end; ++b) {
        const Example& e = *train[order[b]];
        const auto p = net.forward(m.params, e.input);
        std::copy(p.begin(), p.end(), probs.begin());
        const LossResult r = v == ClassifierVariant::Bi
                                 ? focal_loss(probs, target_class(v, e.label), cfg.gamma, alpha)
                                 : mu_loss(probs, e.label.soft);
        entry.clamp_events += r.clamped;
        loss_sum += r.loss;
        for (int j = 0; j < nc; ++j) dlogits[std::size_t(j)] = float(r.dlogits[std::size_t(j)]);
        net.backward(m.params, dlogits, grad);
      }
      const float scale = float(cfg.learning_rate / double(end - start));
      const float mu = float(cfg.momentum);
      for (std::size_t j = 0; j < m.params.size(); ++j) {
        velocity[j] = mu * velocity[j] - scale * grad[j];
        m.params[j] += velocity[j];
      }
    }
    entry.train_loss = loss_sum / double(std::max<std::size_t>(1, order.size()));
    if (!val.empty()) {
      ModelSet single{v, LevelBinding::Shared, {m}};
      single.models[0].level = 0;
      entry.val_accuracy = evaluate(single, val).value();
    }
    log.push_back(entry);
  }
  for (float x : m.params)
    if (!std::isfinite(x)) throw DataError("training diverged: non-finite parameter");
  return m;
}

}  // namespace detail

inline TrainResult train(const std::vector<Example>& data, ClassifierVariant v, LevelBinding binding,
                         const LossConfig& cfg) {
  cfg.validate();
  const DataSplit split = split_examples(data);
  if (split.train.empty()) throw DataError("no training examples");
  TrainResult out;
  out.models.variant = v;
  out.models.binding = binding;
  if (binding == LevelBinding::Shared) {
    out.models.models.push_back(detail::train_one(v, 0, split.train, split.validation, cfg, out.log));
  } else {
    for (int level = 1; level <= 4; ++level) {
      std::vector<const Example*> tr, va;
      for (const Example* e : split.train)
        if (e->label.temporal_level == level) tr.push_back(e);
      for (const Example* e : split.validation)
        if (e->label.temporal_level == level) va.push_back(e);
      out.models.models.push_back(detail::train_one(v, level, tr, va, cfg, out.log));
    }
  }
  out.validation = evaluate(out.models, split.validation);
  return out;
}

}  // namespace fastmra

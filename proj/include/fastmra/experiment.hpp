#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fastmra/error.hpp"
#include "fastmra/gop.hpp"
#include "fastmra/io.hpp"
#include "fastmra/learn.hpp"
#include "fastmra/policy.hpp"
#include "fastmra/report.hpp"
#include "fastmra/synthetic.hpp"
#include "fastmra/y4m.hpp"

namespace fastmra {

using Json = nlohmann::ordered_json;

// ---- configuration ------------------------------------------------------

struct SequenceSource {
  std::string id;
  std::optional<SyntheticSpec> synthetic;  // texture_seed before mixing with the global seed
  std::filesystem::path y4m;
};

struct ClassifierConfig {
  ClassifierVariant variant = ClassifierVariant::Bi;
  LevelBinding binding = LevelBinding::PerLevel;
  std::string dir_name() const { return std::string(to_string(variant)) + "_" + to_string(binding); }
};

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  std::filesystem::path out = "fastmra_out";
  int jobs = 1;
  int gop_size = 32;
  int intra_period = 32;
  int search_range = kDefaultSearchRange;
  std::vector<int> q_indices = {0, 1, 2, 3};
  std::vector<SequenceSource> train_corpus;
  std::vector<SequenceSource> eval_corpus;
  std::vector<std::string> policies = {"FixedS1", "Oracle", "MEMC", "MEMCStar", "BiClass", "MuClass"};
  std::vector<ClassifierConfig> classifiers = {{ClassifierVariant::Bi, LevelBinding::PerLevel},
                                               {ClassifierVariant::Mu, LevelBinding::Shared}};
  LossConfig loss;

  const ClassifierConfig* classifier_for(ClassifierVariant v) const {
    for (const auto& c : classifiers)
      if (c.variant == v) return &c;
    return nullptr;
  }
};

namespace detail {

inline SequenceSource synthetic_source(std::string id, MotionModel m, double vx, double vy,
                                       std::uint64_t texture, double noise, int frames) {
  SyntheticSpec s;
  s.num_frames = frames;
  s.motion_model = m;
  s.velocity_x = vx;
  s.velocity_y = vy;
  s.texture_seed = texture;
  s.noise_sigma = noise;
  return {std::move(id), s, {}};
}

inline bool valid_policy_name(const std::string& p) {
  static const std::vector<std::string> names = {"FixedS1", "FixedS2",  "FixedS4", "FixedS8", "Oracle",
                                                 "MEMC",    "MEMCStar", "BiClass", "MuClass"};
  return std::find(names.begin(), names.end(), p) != names.end();
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void check_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown key '" + k + "' in " + where);
}

inline std::vector<SequenceSource> parse_corpus(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  check_keys(j, {"num_frames", "width", "height", "sequences"}, where);
  const int frames = get_or<int>(j, "num_frames", 65);
  const int width = get_or<int>(j, "width", 192);
  const int height = get_or<int>(j, "height", 128);
  std::vector<SequenceSource> out;
  if (!j.contains("sequences") || !j["sequences"].is_array()) throw ConfigError(where + ".sequences missing");
  for (const auto& s : j["sequences"]) {
    check_keys(s,
               {"id", "y4m", "motion_model", "velocity", "texture_seed", "noise_sigma", "num_frames", "width",
                "height"},
               where + ".sequences[]");
    SequenceSource src;
    src.id = get_or<std::string>(s, "id", "");
    if (src.id.empty() || src.id.find_first_of(",/\\\n ") != std::string::npos)
      throw ConfigError(where + ": sequence id '" + src.id + "' is empty or has separators");
    if (s.contains("y4m")) {
      src.y4m = s["y4m"].get<std::string>();
    } else {
      SyntheticSpec spec;
      spec.width = get_or<int>(s, "width", width);
      spec.height = get_or<int>(s, "height", height);
      spec.num_frames = get_or<int>(s, "num_frames", frames);
      try {
        spec.motion_model = motion_model_from_string(get_or<std::string>(s, "motion_model", "global_translation"));
      } catch (const PreconditionError& e) {
        throw ConfigError(where + ": " + e.what());
      }
      const auto v = get_or<std::vector<double>>(s, "velocity", {0.0, 0.0});
      if (v.size() != 2) throw ConfigError(where + ": velocity needs two components");
      spec.velocity_x = v[0];
      spec.velocity_y = v[1];
      spec.texture_seed = get_or<std::uint64_t>(s, "texture_seed", 1);
      spec.noise_sigma = get_or<double>(s, "noise_sigma", 0.0);
      try {
        spec.validate();
      } catch (const PreconditionError& e) {
        throw ConfigError(where + " sequence " + src.id + ": " + e.what());
      }
      src.synthetic = spec;
    }
    out.push_back(std::move(src));
  }
  std::set<std::string> ids;
  for (const auto& s : out)
    if (!ids.insert(s.id).second) throw ConfigError(where + ": duplicate sequence id " + s.id);
  return out;
}

inline Json corpus_to_json(const std::vector<SequenceSource>& corpus) {
  Json seqs = Json::array();
  for (const auto& s : corpus) {
    Json j;
    j["id"] = s.id;
    if (s.synthetic) {
      const auto& p = *s.synthetic;
      j["motion_model"] = to_string(p.motion_model);
      j["velocity"] = {p.velocity_x, p.velocity_y};
      j["texture_seed"] = p.texture_seed;
      j["noise_sigma"] = p.noise_sigma;
      j["num_frames"] = p.num_frames;
      j["width"] = p.width;
      j["height"] = p.height;
    } else {
      j["y4m"] = s.y4m.string();
    }
    seqs.push_back(j);
  }
  return Json{{"sequences", seqs}};
}

}  // namespace detail

// Training corpus: static, crawling, slow (<= 2 px/frame), two-region and fast
// (>= 4 px/frame) motion. Evaluation corpus: held-out textures with global
// motion of at least 1.5 px/frame.
inline ExperimentConfig default_config() {
  using detail::synthetic_source;
  ExperimentConfig c;
  const auto G = MotionModel::GlobalTranslation;
  const auto T = MotionModel::TwoRegionTranslation;
  const auto S = MotionModel::StaticNoise;
  c.train_corpus = {
      synthetic_source("static_a", S, 0, 0, 101, 1.0, 65),
      synthetic_source("crawl_a", G, 0.3125, 0, 141, 1.0, 65),
      synthetic_source("crawl_b", G, 0, -0.1875, 142, 1.0, 65),
      synthetic_source("crawl_c", G, 0.4375, 0.25, 143, 1.0, 65),
      synthetic_source("slow_a", G, 0.5, 0, 111, 1.0, 65),
      synthetic_source("slow_b", G, 0, 0.75, 112, 1.0, 65),
      synthetic_source("slow_c", G, 1.0, 0.5, 113, 1.0, 65),
      synthetic_source("slow_d", G, -1.25, 0, 114, 1.0, 65),
      synthetic_source("slow_e", G, 2.0, 0, 115, 1.0, 65),
      synthetic_source("slow_f", G, -0.5, -1.5, 116, 1.0, 65),
      synthetic_source("region_a", T, 1.0, 0, 121, 1.0, 65),
      synthetic_source("region_b", T, -2.0, 1.0, 122, 1.0, 65),
      synthetic_source("region_c", T, 1.5, 0, 123, 1.0, 65),
      synthetic_source("fast_a", G, 4.0, 0, 131, 1.0, 65),
      synthetic_source("fast_b", G, -4.0, 2.0, 132, 1.0, 65),
      synthetic_source("fast_c", G, 3.0, -3.0, 133, 1.0, 65),
      synthetic_source("fast_d", G, 2.5, 1.5, 134, 1.0, 65),
      synthetic_source("fast_e", G, -3.5, 0, 135, 1.0, 65),
      synthetic_source("fast_f", G, 5.0, 0, 136, 1.0, 65),
      synthetic_source("fast_g", G, 1.5, 1.5, 137, 1.0, 65),
      synthetic_source("fast_h", G, 0, -4.0, 138, 1.0, 65),
      synthetic_source("fast_i", G, -2.0, -2.0, 145, 1.0, 65),
      synthetic_source("fast_j", G, 2.25, -0.75, 146, 1.0, 65),
      synthetic_source("fast_k", G, -1.75, 1.25, 147, 1.0, 65),
      synthetic_source("fast_l", G, 3.25, 1.0, 148, 1.0, 65),
  };
  c.eval_corpus = {
      synthetic_source("eval_01", G, 1.5, 0, 201, 1.0, 97),
      synthetic_source("eval_02", G, 2.0, 0, 202, 1.0, 97),
      synthetic_source("eval_03", G, -2.5, 0, 203, 1.0, 97),
      synthetic_source("eval_04", G, 3.0, 0, 204, 1.0, 97),
      synthetic_source("eval_05", G, -1.5, 1.0, 205, 1.0, 97),
      synthetic_source("eval_06", G, 2.0, -2.0, 206, 1.0, 97),
      synthetic_source("eval_07", G, -3.0, 0.5, 207, 1.0, 97),
      synthetic_source("eval_08", G, 4.0, 0, 208, 1.0, 97),
      synthetic_source("eval_09", G, 1.5, 1.5, 209, 1.0, 97),
      synthetic_source("eval_10", G, -2.5, -1.0, 210, 1.0, 97),
      synthetic_source("eval_11", G, 3.5, 0, 211, 1.0, 97),
      synthetic_source("eval_12", G, 0, 2.0, 212, 1.0, 97),
  };
  return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["jobs"] = c.jobs;
  j["gop_size"] = c.gop_size;
  j["intra_period"] = c.intra_period;
  j["search_range"] = c.search_range;
  j["q_indices"] = c.q_indices;
  j["train_corpus"] = detail::corpus_to_json(c.train_corpus);
  j["eval_corpus"] = detail::corpus_to_json(c.eval_corpus);
  j["policies"] = c.policies;
  Json cls = Json::array();
  for (const auto& k : c.classifiers) cls.push_back({{"variant", to_string(k.variant)}, {"binding", to_string(k.binding)}});
  j["classifiers"] = cls;
  j["loss"] = {{"gamma", c.loss.gamma},
               {"lambda_soften", c.loss.lambda_soften},
               {"learning_rate", c.loss.learning_rate},
               {"momentum", c.loss.momentum},
               {"batch_size", c.loss.batch_size},
               {"epochs", c.loss.epochs}};
  return j;
}

// Fields missing from `j` keep their default_config() values.
inline ExperimentConfig parse_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::check_keys(j,
                     {"seed", "out", "jobs", "gop_size", "intra_period", "search_range", "q_indices",
                      "train_corpus", "eval_corpus", "policies", "classifiers", "loss"},
                     "config");
  ExperimentConfig c = default_config();
  using detail::get_or;
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.out = get_or<std::string>(j, "out", c.out.string());
  c.jobs = get_or<int>(j, "jobs", c.jobs);
  c.gop_size = get_or<int>(j, "gop_size", c.gop_size);
  c.intra_period = get_or<int>(j, "intra_period", c.intra_period);
  c.search_range = get_or<int>(j, "search_range", c.search_range);
  c.q_indices = get_or<std::vector<int>>(j, "q_indices", c.q_indices);
  if (j.contains("train_corpus")) c.train_corpus = detail::parse_corpus(j["train_corpus"], "train_corpus");
  if (j.contains("eval_corpus")) c.eval_corpus = detail::parse_corpus(j["eval_corpus"], "eval_corpus");
  c.policies = get_or<std::vector<std::string>>(j, "policies", c.policies);
  if (j.contains("classifiers")) {
    c.classifiers.clear();
    for (const auto& k : j["classifiers"]) {
      detail::check_keys(k, {"variant", "binding"}, "classifiers[]");
      try {
        c.classifiers.push_back({variant_from_string(get_or<std::string>(k, "variant", "")),
                                 binding_from_string(get_or<std::string>(k, "binding", "per_level"))});
      } catch (const PreconditionError& e) {
        throw ConfigError(std::string("classifiers: ") + e.what());
      }
    }
  }
  if (j.contains("loss")) {
    const Json& l = j["loss"];
    detail::check_keys(l, {"gamma", "lambda_soften", "learning_rate", "momentum", "batch_size", "epochs"}, "loss");
    c.loss.gamma = get_or<double>(l, "gamma", c.loss.gamma);
    c.loss.lambda_soften = get_or<double>(l, "lambda_soften", c.loss.lambda_soften);
    c.loss.learning_rate = get_or<double>(l, "learning_rate", c.loss.learning_rate);
    c.loss.momentum = get_or<double>(l, "momentum", c.loss.momentum);
    c.loss.batch_size = get_or<int>(l, "batch_size", c.loss.batch_size);
    c.loss.epochs = get_or<int>(l, "epochs", c.loss.epochs);
  }
  return c;
}

// Checks everything that can be checked without touching the output tree.
inline void validate_config(const ExperimentConfig& c) {
  if (c.out.empty()) throw ConfigError("output directory is empty");
  if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (c.gop_size != c.intra_period) throw ConfigError("gop_size must equal intra_period (closed GOPs)");
  if (c.gop_size < 2 || (c.gop_size & (c.gop_size - 1)) || c.gop_size > 32)
    throw ConfigError("gop_size must be a power of two in [2, 32]");
  if (c.search_range < 1 || c.search_range > 64) throw ConfigError("search_range must be in [1, 64]");
  if (c.q_indices.empty()) throw ConfigError("q_indices is empty");
  std::set<int> qs;
  for (int q : c.q_indices) {
    if (q < 0 || q >= kNumQuantizers) throw ConfigError("q index " + std::to_string(q) + " out of range");
    if (!qs.insert(q).second) throw ConfigError("duplicate q index " + std::to_string(q));
  }
  for (const auto* corpus : {&c.train_corpus, &c.eval_corpus})
    for (const auto& s : *corpus) {
      if (!s.synthetic && !std::filesystem::exists(s.y4m))
        throw ConfigError("sequence " + s.id + ": file " + s.y4m.string() + " does not exist");
      if (s.synthetic && (s.synthetic->num_frames - 1) % c.intra_period != 0)
        throw ConfigError("sequence " + s.id + ": num_frames must be a multiple of intra_period plus one");
    }
  for (const auto& p : c.policies) {
    if (!detail::valid_policy_name(p)) throw ConfigError("unknown policy '" + p + "'");
    if (p == "BiClass" && !c.classifier_for(ClassifierVariant::Bi))
      throw ConfigError("policy BiClass needs a bi classifier entry");
    if (p == "MuClass" && !c.classifier_for(ClassifierVariant::Mu))
      throw ConfigError("policy MuClass needs a mu classifier entry");
  }
  std::set<ClassifierVariant> variants;
  for (const auto& k : c.classifiers)
    if (!variants.insert(k.variant).second) throw ConfigError("at most one classifier per variant");
  try {
    c.loss.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
}

// ---- output layout ------------------------------------------------------

struct OutputLayout {
  std::filesystem::path root;
  std::filesystem::path corpus_dir() const { return root / "corpus"; }
  std::filesystem::path manifest() const { return corpus_dir() / "manifest.json"; }
  std::filesystem::path labels() const { return root / "labels" / "labels.csv"; }
  std::filesystem::path features() const { return root / "labels" / "labels.feat"; }
  std::filesystem::path census() const { return root / "labels" / "census.txt"; }
  std::filesystem::path model_dir(const ClassifierConfig& k) const { return root / "models" / k.dir_name(); }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path reports() const { return eval_dir() / "reports.json"; }
  std::filesystem::path rdc_report() const { return eval_dir() / "rdc_report.csv"; }
  std::filesystem::path rd_points() const { return eval_dir() / "rd_points.csv"; }
  std::filesystem::path kmac() const { return eval_dir() / "kmac.txt"; }
};

// Runs fn(0..n-1) on up to `jobs` threads; the first failure by index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, std::size_t(std::max(1, jobs)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- gen-data -----------------------------------------------------------

struct CorpusEntry {
  std::string id;
  std::string split;  // "train" or "eval"
  std::filesystem::path file;
  std::string checksum;
  int frames = 0, width = 0, height = 0;
};

inline SyntheticSpec seeded_spec(const SyntheticSpec& s, std::uint64_t global_seed) {
  SyntheticSpec out = s;
  out.texture_seed = mix_seed(global_seed, s.texture_seed);
  return out;
}

inline std::string file_checksum(const std::filesystem::path& p) { return to_hex(fnv1a64(read_file(p))); }

inline std::vector<CorpusEntry> cmd_gen_data(const ExperimentConfig& c, std::ostream& log = std::cout) {
  validate_config(c);
  const OutputLayout out{c.out};
  std::error_code ec;
  std::filesystem::create_directories(out.corpus_dir(), ec);
  if (ec) throw IoError("cannot create " + out.corpus_dir().string() + ": " + ec.message());

  struct Job {
    const SequenceSource* src;
    std::string split;
  };
  std::vector<Job> jobs;
  for (const auto& s : c.train_corpus) jobs.push_back({&s, "train"});
  for (const auto& s : c.eval_corpus) jobs.push_back({&s, "eval"});
  std::vector<CorpusEntry> entries(jobs.size());
  parallel_for(jobs.size(), c.jobs, [&](std::size_t i) {
    const SequenceSource& s = *jobs[i].src;
    CorpusEntry& e = entries[i];
    e.id = s.id;
    e.split = jobs[i].split;
    if (s.synthetic) {
      const Sequence seq = gen_synthetic(seeded_spec(*s.synthetic, c.seed));
      e.file = std::filesystem::path(e.split) / (s.id + ".y4m");
      const auto target = out.corpus_dir() / e.file;
      std::filesystem::create_directories(target.parent_path());
      save_y4m(seq, target.string() + ".tmp");
      std::filesystem::rename(target.string() + ".tmp", target);
      e.frames = int(seq.size());
      e.width = seq.width();
      e.height = seq.height();
      e.checksum = file_checksum(target);
    } else {
      const LoadedSequence loaded = load_y4m(s.y4m);
      e.file = std::filesystem::absolute(s.y4m);
      e.frames = int(loaded.sequence.size());
      e.width = loaded.sequence.width();
      e.height = loaded.sequence.height();
      e.checksum = file_checksum(s.y4m);
    }
  });

  Json m;
  m["format"] = "fastmra_corpus";
  m["version"] = 1;
  m["seed"] = c.seed;
  Json list = Json::array();
  for (const auto& e : entries)
    list.push_back({{"id", e.id},
                    {"split", e.split},
                    {"file", e.file.string()},
                    {"checksum", e.checksum},
                    {"frames", e.frames},
                    {"width", e.width},
                    {"height", e.height}});
  m["sequences"] = list;
  write_file_atomic(out.manifest(), m.dump(2) + "\n");
  log << "wrote " << entries.size() << " sequences to " << out.corpus_dir().string() << "\n";
  return entries;
}

struct CorpusSequence {
  std::string id;
  Sequence sequence;
};

// Loads one split of the corpus written by gen-data, verifying checksums.
inline std::vector<CorpusSequence> load_corpus(const ExperimentConfig& c, const std::string& split) {
  const OutputLayout out{c.out};
  if (!std::filesystem::exists(out.manifest()))
    throw DataError("corpus manifest " + out.manifest().string() + " missing; run gen-data first");
  Json m;
  try {
    m = Json::parse(read_file(out.manifest()));
  } catch (const Json::exception& e) {
    throw DataError("corpus manifest unreadable: " + std::string(e.what()));
  }
  std::vector<CorpusSequence> seqs;
  for (const auto& e : m.at("sequences")) {
    if (e.at("split").get<std::string>() != split) continue;
    std::filesystem::path file = e.at("file").get<std::string>();
    if (file.is_relative()) file = out.corpus_dir() / file;
    if (!std::filesystem::exists(file)) throw DataError("corpus file " + file.string() + " missing");
    if (file_checksum(file) != e.at("checksum").get<std::string>())
      throw DataError("corpus file " + file.string() + " fails its checksum");
    seqs.push_back({e.at("id").get<std::string>(), load_y4m(file).sequence});
  }
  if (seqs.empty()) throw DataError("corpus manifest lists no " + split + " sequences");
  return seqs;
}

// ---- label --------------------------------------------------------------

inline constexpr const char kFeatureMagic[8] = {'F', 'M', 'F', 'E', 'A', 'T', '0', '1'};

inline std::string serialize_features(const std::vector<LabelRecord>& records,
                                      const std::vector<ClassifierInput>& inputs) {
  std::string out(kFeatureMagic, 8);
  auto put64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(char((v >> (8 * b)) & 0xff));
  };
  put64(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    put64(records[i].input_digest);
    out.append(reinterpret_cast<const char*>(inputs[i].samples.data()), kFeatSize);
  }
  return out;
}

inline std::vector<ClassifierInput> parse_features(const std::string& bytes, const std::vector<LabelRecord>& records) {
  auto get64 = [&](std::size_t at) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(std::uint8_t(bytes[at + std::size_t(b)])) << (8 * b);
    return v;
  };
  if (bytes.size() < 16 || bytes.compare(0, 8, std::string(kFeatureMagic, 8)) != 0)
    throw DataError("feature file has a bad header");
  const std::uint64_t n = get64(8);
  if (n != records.size()) throw DataError("feature file holds " + std::to_string(n) + " records, labels " + std::to_string(records.size()));
  if (bytes.size() != 16 + n * (8 + kFeatSize)) throw DataError("feature file size mismatch");
  std::vector<ClassifierInput> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = 16 + i * (8 + kFeatSize);
    if (get64(at) != records[i].input_digest) throw DataError("feature record " + std::to_string(i) + " digest mismatch");
    std::copy(bytes.begin() + std::ptrdiff_t(at + 8), bytes.begin() + std::ptrdiff_t(at + 8 + kFeatSize),
              out[i].samples.begin());
  }
  return out;
}

struct LabelOutcome {
  LabelSet labels;
  std::vector<ClassifierInput> inputs;
  LabelCensus census;
};

inline LabelOutcome cmd_label(const ExperimentConfig& c, std::ostream& log = std::cout) {
  validate_config(c);
  const OutputLayout out{c.out};
  const auto corpus = load_corpus(c, "train");
  struct Task {
    std::size_t seq;
    int q;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < corpus.size(); ++s)
    for (int q : c.q_indices) tasks.push_back({s, q});
  std::vector<std::vector<std::pair<LabelRecord, ClassifierInput>>> parts(tasks.size());
  parallel_for(tasks.size(), c.jobs, [&](std::size_t i) {
    const CorpusSequence& cs = corpus[tasks[i].seq];
    const GopPlan plan = build_gop_plan(int(cs.sequence.size()), c.intra_period, c.gop_size);
    extract_labels(
        cs.sequence, cs.id, plan, QuantConfig::from_index(tasks[i].q),
        [&](LabelRecord r, const ClassifierInput& in) { parts[i].emplace_back(std::move(r), in); },
        c.loss.lambda_soften, c.search_range);
  });
  LabelOutcome o;
  o.labels.lambda_soften = c.loss.lambda_soften;
  for (auto& p : parts)
    for (auto& [r, in] : p) {
      o.labels.records.push_back(std::move(r));
      o.inputs.push_back(std::move(in));
    }
  o.census = census(o.labels.records);
  write_file_atomic(out.labels(), serialize_labels(o.labels));
  write_file_atomic(out.features(), serialize_features(o.labels.records, o.inputs));
  write_file_atomic(out.census(), o.census.format());
  log << o.labels.records.size() << " label records\n" << o.census.format();
  return o;
}

inline std::vector<Example> load_examples(const ExperimentConfig& c) {
  const OutputLayout out{c.out};
  if (!std::filesystem::exists(out.labels())) throw DataError("label file missing; run label first");
  LabelSet set;
  try {
    set = parse_labels(read_file(out.labels()));
  } catch (const FormatError& e) {
    throw DataError(std::string("label file: ") + e.what());
  }
  auto inputs = parse_features(read_file(out.features()), set.records);
  std::vector<Example> ex;
  for (std::size_t i = 0; i < set.records.size(); ++i) ex.push_back({std::move(set.records[i]), std::move(inputs[i])});
  return ex;
}

// ---- train --------------------------------------------------------------

struct TrainOutcome {
  ClassifierConfig config;
  TrainResult result;
  std::vector<std::filesystem::path> checkpoints;
};

inline std::vector<TrainOutcome> cmd_train(const ExperimentConfig& c, std::ostream& log = std::cout) {
  validate_config(c);
  if (c.classifiers.empty()) throw ConfigError("no classifiers configured");
  const OutputLayout out{c.out};
  const auto examples = load_examples(c);
  std::vector<TrainOutcome> outcomes;
  for (const auto& k : c.classifiers) {
    LossConfig loss = c.loss;
    loss.seed = mix_seed(c.seed, k.variant == ClassifierVariant::Bi ? 0xb1 : 0x40);
    TrainOutcome o{k, train(examples, k.variant, k.binding, loss), {}};
    const auto dir = out.model_dir(k);
    for (const auto& m : o.result.models.models) o.checkpoints.push_back(save_checkpoint(m, dir));
    std::string tsv = "level\tepoch\ttrain_loss\tval_accuracy\tclamp_events\n";
    char line[128];
    for (const auto& e : o.result.log) {
      std::snprintf(line, sizeof line, "%d\t%d\t%.9g\t%.6f\t%zu\n", e.level, e.epoch, e.train_loss, e.val_accuracy,
                    e.clamp_events);
      tsv += line;
    }
    write_file_atomic(dir / "train_log.tsv", tsv);
    const DataSplit split = split_examples(examples);
    Json summary = {{"variant", to_string(k.variant)},
                    {"binding", to_string(k.binding)},
                    {"train_examples", split.train.size()},
                    {"validation_examples", o.result.validation.total},
                    {"validation_accuracy", o.result.validation.value()},
                    {"majority_frequency", o.result.validation.majority_frequency()}};
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    log << k.dir_name() << ": held-out accuracy " << o.result.validation.value() << " (majority "
        << o.result.validation.majority_frequency() << ", " << o.result.validation.total << " examples)\n";
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

inline ModelSet load_model_set(const std::filesystem::path& dir, const ClassifierConfig& k) {
  ModelSet set;
  set.variant = k.variant;
  set.binding = k.binding;
  const std::string v = to_string(k.variant);
  try {
    if (k.binding == LevelBinding::Shared) {
      set.models.push_back(load_checkpoint(dir / (v + "_shared.manifest")));
    } else {
      for (int l = 1; l <= 4; ++l)
        set.models.push_back(load_checkpoint(dir / (v + "_level" + std::to_string(l) + ".manifest")));
    }
    set.validate();
  } catch (const IoError& e) {
    throw DataError(std::string("checkpoint missing: ") + e.what() + "; run train first");
  } catch (const FormatError& e) {
    throw DataError(std::string("checkpoint invalid: ") + e.what());
  }
  return set;
}

// ---- eval ---------------------------------------------------------------

inline SPolicy make_policy(const std::string& name, const ExperimentConfig& c) {
  if (name.rfind("FixedS", 0) == 0) return FixedS{std::stoi(name.substr(6))};
  if (name == "Oracle") return OraclePolicy{};
  if (name == "MEMC") return MemcPolicy{};
  if (name == "MEMCStar") return MemcStarPolicy{};
  const OutputLayout out{c.out};
  if (name == "BiClass") {
    const auto* k = c.classifier_for(ClassifierVariant::Bi);
    return BiClassPolicy{std::make_shared<const ModelSet>(load_model_set(out.model_dir(*k), *k))};
  }
  if (name == "MuClass") {
    const auto* k = c.classifier_for(ClassifierVariant::Mu);
    return MuClassPolicy{std::make_shared<const ModelSet>(load_model_set(out.model_dir(*k), *k))};
  }
  throw ConfigError("unknown policy '" + name + "'");
}

// Encodes, decodes and checks every frame against the encoder reconstruction.
// Decodes the bitstream and compares every frame with the encoder's
// reconstruction; any difference is a VerificationError.
inline void verify_decode(const EncodeOutcome& enc, const GopPlan& plan, const std::string& what) {
  Sequence dec;
  try {
    dec = decode_sequence(enc.bitstream, plan);
  } catch (const DecodeError& e) {
    throw VerificationError(what + ": " + e.what());
  }
  if (dec.frames.size() != enc.recon.size()) throw VerificationError(what + ": decoded frame count differs");
  for (std::size_t i = 0; i < dec.frames.size(); ++i)
    if (dec.frames[i] != enc.recon[i])
      throw VerificationError(what + ": decoded frame " + std::to_string(i) + " differs from the encoder");
}

inline SequenceReport encode_and_verify(const CorpusSequence& cs, const SPolicy& policy, const std::string& name,
                                        int q_index, const ExperimentConfig& c) {
  const GopPlan plan = build_gop_plan(int(cs.sequence.size()), c.intra_period, c.gop_size);
  EncodeOutcome enc = encode_sequence(cs.sequence, plan, make_decider(policy), QuantConfig::from_index(q_index), {},
                                      c.search_range);
  verify_decode(enc, plan, "policy " + name + ", sequence " + cs.id + ", q " + std::to_string(q_index));
  enc.report.sequence_id = cs.id;
  enc.report.policy = name;
  return std::move(enc.report);
}

struct EvalOutcome {
  std::vector<SequenceReport> reports;
  std::vector<PolicySummary> summary;
};

inline void write_eval_outputs(const OutputLayout& out, const std::vector<SequenceReport>& reports,
                               const std::vector<PolicySummary>& summary) {
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  write_file_atomic(out.reports(), arr.dump(1) + "\n");
  write_file_atomic(out.rd_points(), rd_points_csv(reports));
  write_file_atomic(out.rdc_report(), rdc_table_csv(summary));
  write_file_atomic(out.kmac(), kmac_breakdown(summary));
}

inline EvalOutcome cmd_eval(const ExperimentConfig& c, std::ostream& log = std::cout) {
  validate_config(c);
  const OutputLayout out{c.out};
  const auto corpus = load_corpus(c, "eval");
  std::vector<SPolicy> policies;
  for (const auto& p : c.policies) policies.push_back(make_policy(p, c));

  struct Task {
    std::size_t policy, seq;
    int q;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < policies.size(); ++p)
    for (std::size_t s = 0; s < corpus.size(); ++s)
      for (int q : c.q_indices) tasks.push_back({p, s, q});
  EvalOutcome o;
  o.reports.resize(tasks.size());
  parallel_for(tasks.size(), c.jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    o.reports[i] = encode_and_verify(corpus[t.seq], policies[t.policy], c.policies[t.policy], t.q, c);
  });
  o.summary = summarize(o.reports);
  write_eval_outputs(out, o.reports, o.summary);
  log << rdc_table_csv(o.summary);
  return o;
}

// ---- report -------------------------------------------------------------

inline std::vector<PolicySummary> cmd_report(const ExperimentConfig& c, std::ostream& log = std::cout) {
  validate_config(c);
  const OutputLayout out{c.out};
  if (!std::filesystem::exists(out.reports())) throw DataError("no evaluation reports; run eval first");
  std::vector<SequenceReport> reports;
  try {
    for (const auto& j : Json::parse(read_file(out.reports()))) reports.push_back(report_from_json(j));
  } catch (const Json::exception& e) {
    throw DataError(std::string("reports unreadable: ") + e.what());
  }
  const auto summary = summarize(reports);
  write_file_atomic(out.rdc_report(), rdc_table_csv(summary));
  write_file_atomic(out.kmac(), kmac_breakdown(summary));
  log << rdc_table_csv(summary) << '\n' << kmac_breakdown(summary);
  return summary;
}

}  // namespace fastmra

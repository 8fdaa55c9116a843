#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fastmra/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerify = 4;
constexpr const char* kConfigEnv = "FASTMRA_CONFIG";

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "experiment config (JSON); defaults to $FASTMRA_CONFIG, else built-in");
  sub->add_option("--seed", o.seed, "global seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--jobs", o.jobs, "worker threads");
}

fastmra::ExperimentConfig resolve(const Overrides& o) {
  std::string path = o.config;
  if (path.empty())
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  fastmra::ExperimentConfig c;
  if (path.empty()) {
    c = fastmra::default_config();
  } else {
    std::string text;
    try {
      text = fastmra::read_file(path);
    } catch (const fastmra::IoError& e) {
      throw fastmra::ConfigError(e.what());
    }
    try {
      c = fastmra::parse_config(fastmra::Json::parse(text));
    } catch (const fastmra::Json::parse_error& e) {
      throw fastmra::ConfigError(path + ": " + e.what());
    }
  }
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.jobs) c.jobs = *o.jobs;
  fastmra::validate_config(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-frame motion resolution selection for hierarchical B-frame coding"};
  app.require_subcommand(1);
  Overrides o;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus and its manifest");
  auto* label = app.add_subcommand("label", "extract exhaustive-search labels from the training corpus");
  auto* train = app.add_subcommand("train", "train the configured classifiers");
  auto* eval = app.add_subcommand("eval", "encode, verify and report every policy on the evaluation corpus");
  auto* report = app.add_subcommand("report", "rebuild the RD-complexity table from stored reports");
  auto* pipeline = app.add_subcommand("pipeline", "gen-data, label, train, eval and report in sequence");
  auto* dump = app.add_subcommand("dump-config", "print the resolved config as JSON");
  for (auto* s : {gen, label, train, eval, report, pipeline, dump}) add_common(s, o);

  CLI11_PARSE(app, argc, argv);

  try {
    const fastmra::ExperimentConfig c = resolve(o);
    if (dump->parsed()) {
      std::cout << fastmra::config_to_json(c).dump(2) << '\n';
    } else if (gen->parsed()) {
      fastmra::cmd_gen_data(c);
    } else if (label->parsed()) {
      fastmra::cmd_label(c);
    } else if (train->parsed()) {
      fastmra::cmd_train(c);
    } else if (eval->parsed()) {
      fastmra::cmd_eval(c);
    } else if (report->parsed()) {
      fastmra::cmd_report(c);
    } else if (pipeline->parsed()) {
      fastmra::cmd_gen_data(c);
      fastmra::cmd_label(c);
      fastmra::cmd_train(c);
      fastmra::cmd_eval(c);
      fastmra::cmd_report(c);
    }
  } catch (const fastmra::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fastmra::VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kExitVerify;
  } catch (const fastmra::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}

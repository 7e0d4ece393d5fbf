#include <iostream>

#include "CLI11.hpp"
#include "fedids/errors.hpp"
#include "fedids/eval.hpp"
#include "fedids/experiment.hpp"
#include "fedids/log.hpp"

namespace {

// Exit codes: 0 ok, 1 config rejected, 2 the run itself failed.
constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

void apply_verbosity(int verbose, bool quiet) {
  using fedids::log::Level;
  if (quiet) fedids::log::set_level(Level::Quiet);
  else if (verbose >= 2) fedids::log::set_level(Level::Debug);
  else if (verbose == 1) fedids::log::set_level(Level::Info);
  else fedids::log::set_level(Level::Warn);
}

int cmd_validate(const std::string& path) {
  try {
    const auto problems = fedids::validate_config_file(path);
    if (problems.empty()) {
      std::cout << path << ": ok\n";
      return kOk;
    }
    for (const auto& p : problems) std::cerr << path << ": " << p << "\n";
    return kInvalid;
  } catch (const fedids::Error& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kInvalid;
  }
}

int cmd_run(const std::string& path, const std::string& output_dir, std::optional<std::uint64_t> seed) {
  fedids::ExperimentConfig config;
  try {
    config = fedids::load_config(path);
    if (seed) {
      config.seed = *seed;
      config.plan.seed = *seed;
    }
    if (!output_dir.empty()) config.output_dir = std::filesystem::absolute(output_dir);
    const auto problems = fedids::validate_config(config);
    if (!problems.empty()) {
      for (const auto& p : problems) std::cerr << path << ": " << p << "\n";
      return kInvalid;
    }
  } catch (const fedids::Error& e) {
    std::cerr << path << ": " << e.what() << "\n";
    return kInvalid;
  }
  try {
    const auto result = fedids::run_experiment(config);
    std::cout << fedids::format_report(config.name, result.report);
    for (const auto& [name, r] : result.individual_reports) {
      std::cout << "\n" << fedids::format_report("individual model: " + name, r);
    }
    if (result.threshold) {
      std::cout << "\n" << fedids::format_report("autoencoder threshold baseline", result.threshold->report);
    }
    std::cout << "\nartifacts: " << result.run_dir.string() << "\n";
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated autoencoder + classifier intrusion detection"};
  app.require_subcommand(1);
  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "More logging (repeat for debug)");
  app.add_flag("-q,--quiet", quiet, "Only errors");

  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("config", config_path, "Experiment config")->required();
  run->add_option("-o,--output-dir", output_dir, "Override output directory");
  run->add_option("-s,--seed", seed, "Override the run seed");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", config_path, "Experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }
  apply_verbosity(verbose, quiet);
  if (*validate) return cmd_validate(config_path);
  return cmd_run(config_path, output_dir, seed);
}

// varcurv CLI: run experiments from JSON configs, verify their artifacts,
// list what is available. An empty config file runs the default smoke
// experiment (a short stochastic-ascent trajectory) and exits 0.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "varcurv/config.hpp"
#include "varcurv/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> output_root;
  int threads = 1;
};

nlohmann::json load_config(const CommonArgs& args) {
  nlohmann::json config = varcurv::load_json_file(args.config_path);
  if (!config.is_object())
    throw varcurv::ConfigError("config root must be a JSON object");
  for (const std::string& assignment : args.overrides)
    varcurv::apply_set_override(config, assignment);
  return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("config", args.config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides,
                  "override a config value by dotted path, e.g. "
                  "--set es.population=32");
  cmd->add_option("--output-root", args.output_root,
                  "root directory for artifacts (default: "
                  "$VARCURV_OUTPUT_ROOT, then the current directory)");
  cmd->add_option("--threads", args.threads, "worker threads for replicates")
      ->check(CLI::PositiveNumber);
}

int run_command(const CommonArgs& args) {
  const nlohmann::json config = load_config(args);
  varcurv::RunOptions options;
  options.threads = args.threads;
  options.output_root = args.output_root;
  varcurv::run_experiment(config, options, std::cout);
  return 0;
}

int verify_command(const CommonArgs& args) {
  const nlohmann::json config = load_config(args);
  varcurv::RunOptions options;
  options.threads = args.threads;
  options.output_root = args.output_root;
  const varcurv::VerifyReport report =
      varcurv::verify_experiment(config, options, std::cout);
  for (const std::string& line : report.checks) std::cout << line << "\n";
  std::cout << (report.ok ? "verify passed" : "verify FAILED") << "\n";
  return report.ok ? 0 : 1;
}

int list_command() {
  for (const varcurv::ExperimentInfo& info : varcurv::experiment_catalog())
    std::cout << info.name << ": " << info.summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variance-curvature toolkit"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run an experiment from a config");
  add_common(run, run_args);

  CommonArgs verify_args;
  CLI::App* verify = app.add_subcommand(
      "verify", "check a completed run's artifacts against its config");
  add_common(verify, verify_args);

  CLI::App* list = app.add_subcommand("list-experiments",
                                      "list available experiment kinds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(run_args);
    if (verify->parsed()) return verify_command(verify_args);
    if (list->parsed()) return list_command();
  } catch (const varcurv::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

// Command-line front end: run, validate, list-experiments, version.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "spdelab/experiments.hpp"

using namespace spdelab;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumerical = 2;

int guarded(const std::function<int()> &body) {
  try {
    return body();
  } catch (const NumericalError &e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const UsageError &e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Convex-potential SPDE experiments"};
  app.require_subcommand(1);

  std::string config_path, output;
  auto *run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("-o,--output", output, "override the output directory");
  auto *check = app.add_subcommand("validate", "parse and validate a config file without running it");
  check->add_option("config", config_path, "config file")->required();
  app.add_subcommand("list-experiments", "list the experiment kinds");
  app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  if (app.got_subcommand("version")) {
    std::cout << "spdelab " << version() << '\n';
    return kOk;
  }
  if (app.got_subcommand("list-experiments")) {
    for (const auto &k : experiment_kinds())
      std::cout << k << '\n';
    return kOk;
  }
  if (app.got_subcommand("validate"))
    return guarded([&] {
      const auto cfg = load_config(config_path);
      validate(cfg);
      std::cout << "ok: " << to_string(cfg.kind) << ", " << planned_simulations(cfg)
                << " simulations, work " << planned_work(cfg) << '\n';
      return kOk;
    });
  return guarded([&] {
    auto cfg = load_config(config_path);
    if (!output.empty())
      cfg.output_dir = output;
    const auto r = run_experiment(cfg);
    std::cout << r.summary << '\n';
    for (const auto &f : r.files)
      std::cout << "wrote " << cfg.output_dir << '/' << f << '\n';
    return kOk;
  });
}

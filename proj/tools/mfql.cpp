#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfql/cli.hpp"
#include "mfql/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"One-step MeanFlow policies with Q-learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  for (const char* name : {"train-toy", "train-rl", "eval", "variants-report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value config file")->required();
    sub->add_option("--set", overrides, "override a config entry (key=value)")->take_all();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mfql::kExitOk : mfql::kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  mfql::RunConfig cfg;
  try {
    cfg = mfql::RunConfig::load(config_path);
    for (const auto& assignment : overrides) cfg.set(assignment);
  } catch (const mfql::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mfql::kExitConfig;
  }
  return mfql::run_command(command, cfg, std::cout, std::cerr);
}

#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "cavloss/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cavity loss budget toolkit"};
  app.require_subcommand(1);

  cavloss::RunConfig config;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "synthesize a pulsed ringdown ensemble"},
      {"fit-ringdown", "fit a decay rate to a stored ensemble"},
      {"fit-power", "fit the power-dependent loss model to a sweep"},
      {"invert", "solve the participation system for loss factors"},
      {"sensitivity", "map the resolvable substrate-loss region"},
      {"separate", "split substrate loss into bulk and interface parts"},
      {"pipeline", "run the synthetic end-to-end chain"},
  };
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config.config_path,
                    "JSON config file (omit for an empty config)");
    sub->add_option("--out", config.out_dir,
                    "artifact directory (default: $CAVLOSS_OUT, then .)");
    sub->add_option("--set", config.overrides,
                    "config override as dotted.path=value, repeatable");
    const std::string cmd = name;
    sub->callback([&config, cmd] { config.command = cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return cavloss::run(config);
}

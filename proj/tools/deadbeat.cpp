// Command-line front end: deadbeat <simulate|observe|check|sweep> CONFIG [flags]

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "deadbeat/app/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hybrid dead-beat observer experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::int64_t seed = 0;
  bool plot = false;
  bool quiet = false;

  for (const auto& [name, help] : {std::pair{"simulate", "simulate the plant and write its trajectory"},
                                   std::pair{"observe", "run plant and observer, write the estimation error"},
                                   std::pair{"check", "report Gramian and determinant observability certificates"},
                                   std::pair{"sweep", "run a bounded/converging-noise robustness experiment"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config_path, "configuration file (YAML)")->required();
    sub->add_option("--output", output_dir, "output directory (overrides output.dir)");
    sub->add_flag("--plot", plot, "also write an SVG plot");
    sub->add_option("--seed", seed, "override the noise seed");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : deadbeat::app::kExitConfig;
  }

  deadbeat::app::RunFlags flags;
  flags.plot = plot;
  flags.quiet = quiet;
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--output")) flags.output_dir = output_dir;
    if (sub->count("--seed")) flags.seed = static_cast<std::uint64_t>(seed);
    return deadbeat::app::run_command(sub->get_name(), config_path, flags, std::cout, std::cerr);
  }
  return deadbeat::app::kExitConfig;
}

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cropstress/cli/stages.hpp"
#include "cropstress/core/error.hpp"

namespace cli = cropstress::cli;

namespace {

void print_outcome(const cli::StageOutcome& outcome) {
  std::printf("[%s] %s", outcome.stage.c_str(), cli::stage_status_name(outcome.status));
  if (!outcome.outputs.empty()) {
    std::printf(" (%zu output%s)", outcome.outputs.size(),
                outcome.outputs.size() == 1 ? "" : "s");
  }
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crop-stress detection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool force = false;
  app.add_option("--config", config_path, "run configuration (flat dotted-key JSON)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", seed, "seed override for every seeded stage");
  app.add_flag("--stage-force", force, "rerun stages even when their manifest matches");

  std::vector<std::string> commands = cli::stage_names();
  commands.push_back("pipeline");
  for (const std::string& name : commands) {
    app.add_subcommand(name, name == "pipeline" ? "run every stage in order"
                                                : "run the " + name + " stage")
        ->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    cli::RunConfig config;
    if (!config_path.empty()) config = cli::load_run_config(config_path);
    if (out_opt->count() > 0) config.out = out_dir;
    if (seed_opt->count() > 0) config.seed = seed;
    if (force) config.force = true;

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "pipeline") {
      for (const cli::StageOutcome& outcome : cli::run_pipeline(config)) {
        print_outcome(outcome);
      }
    } else {
      print_outcome(cli::run_stage(command, config));
    }
    return 0;
  } catch (const cropstress::core::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", cropstress::core::error_kind_name(e.kind()),
                 e.what());
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

// SPDX-License-Identifier: Apache-2.0
#include "fedapta/commands.hpp"
#include "fedapta/config.hpp"
#include "fedapta/error.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace fedapta;

  CLI::App app{"Task-aware federated learning with adaptive pruning"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  CommandOptions opts;
  std::string ratios_text;
  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", opts.config, "config file (key = value)")->required();
    if (needs_out) cmd->add_option("--out", opts.out, "output directory")->required();
    cmd->add_option("--seed", opts.seed, "master seed, overrides the config");
  };

  auto* run = app.add_subcommand("run", "run the federation and write per-round metrics");
  add_common(run, true);

  auto* sweep = app.add_subcommand("sweep-prune", "one federation per uniform pruning ratio");
  add_common(sweep, true);
  sweep->add_option("--ratios", ratios_text, "comma-separated pruning ratios")->required();

  auto* study = app.add_subcommand("metric-study", "compare update similarity metrics after one round");
  add_common(study, true);
  study->add_option("--metrics", opts.metrics, "subset of l1,l2,inner,cosine")->delimiter(',');

  auto* check = app.add_subcommand("validate-config", "parse a config and print it fully resolved");
  add_common(check, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*run) return cmd_run(opts, std::cerr);
  if (*sweep) {
    try {
      opts.ratios = parse_number_list(ratios_text, "ratios");
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    return cmd_sweep_prune(opts, std::cerr);
  }
  if (*study) return cmd_metric_study(opts, std::cerr);
  return cmd_validate_config(opts, std::cout, std::cerr);
}

// mia_audit: command-line front end for the membership-inference audit toolkit.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mia/experiment.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string scenario;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_scenario) {
  cmd->add_option("--config", opts.config, "JSON config file (defaults apply to absent keys)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "master seed (overrides the config)");
  cmd->add_option("--out", opts.out, "output directory (overrides the config)");
  if (with_scenario) {
    cmd->add_option("--scenario", opts.scenario,
                    "standard | label_smoothing[:alpha] | temperature[:T] | l2[:lambda]");
  }
}

mia::ExperimentConfig resolve_config(const CommonOptions& opts) {
  mia::ExperimentConfig cfg =
      opts.config.empty() ? mia::default_config() : mia::load_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.scenario.empty()) cfg.scenario = mia::parse_scenario(opts.scenario, cfg.scenarios);
  if (!opts.out.empty()) cfg.output = opts.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership-inference audit toolkit"};
  app.set_version_flag("--version", mia::kToolkitVersion);
  app.require_subcommand(1);

  CommonOptions gen_opts;
  CommonOptions run_opts;
  CommonOptions sweep_opts;
  auto* gen = app.add_subcommand("generate-data", "generate and split the synthetic datasets");
  add_common(gen, gen_opts, false);
  auto* run = app.add_subcommand("run", "train target/shadow, fit attacks, evaluate, report");
  add_common(run, run_opts, true);
  auto* sweep = app.add_subcommand("scaling-sweep", "member fraction of scaled non-members per delta");
  add_common(sweep, sweep_opts, true);

  std::vector<std::string> run_dirs;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "compare completed runs: deltas, KDE curves, EMD");
  report->add_option("runs", run_dirs, "completed run directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  mia::ExperimentConfig cfg;
  try {
    if (*gen) cfg = resolve_config(gen_opts);
    if (*run) cfg = resolve_config(run_opts);
    if (*sweep) cfg = resolve_config(sweep_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen) {
      mia::cmd_generate_data(cfg, cfg.output);
    } else if (*run) {
      mia::cmd_run(cfg, cfg.output);
      std::cout << "run complete: " << cfg.output << "/summary.csv\n";
    } else if (*sweep) {
      mia::cmd_scaling_sweep(cfg, cfg.output);
      std::cout << "sweep complete: " << cfg.output << "/scaling_sweep.csv\n";
    } else if (*report) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      mia::cmd_report(dirs, report_out);
      std::cout << "report complete: " << report_out << "/comparison.csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

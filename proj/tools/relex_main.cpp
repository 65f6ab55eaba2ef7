// Command line front end: generate / validate / run / report.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "relex/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"relex: representation-selecting optimistic RL on exactly factored MDPs"};
  app.require_subcommand(1);

  relex::GenerateOptions gen;
  CLI::App* generate = app.add_subcommand("generate", "Write an instance/class pair");
  generate->add_option("kind", gen.kind, "tabular | cluster | rotated")->required();
  generate->add_option("--preset", gen.preset, "named instance for tabular (m1)");
  generate->add_option("--instance", gen.instance_path, "source instance JSON");
  generate->add_option("--class", gen.class_path, "source class JSON (rotated)");
  generate->add_option("--rotation", gen.rotation_path, "explicit rotation matrices JSON (rotated)");
  generate->add_option("--states", gen.states, "cluster: number of states");
  generate->add_option("--actions", gen.actions, "cluster: number of actions");
  generate->add_option("--horizon", gen.horizon, "cluster: horizon");
  generate->add_option("--clusters", gen.clusters, "cluster: number of clusters");
  generate->add_option("--reward-margin", gen.reward_margin, "cluster: best-action reward margin");
  generate->add_option("--rotated-copies", gen.rotated_copies, "cluster: rotated coarse copies");
  generate->add_option("--seed", gen.seed, "generator seed");
  generate->add_option("--out", gen.out_dir, "output directory");

  std::string val_instance, val_class, val_out;
  double val_rank_tol = 1e-7;
  CLI::App* validate = app.add_subcommand("validate", "Check an instance/class pair");
  validate->add_option("--instance", val_instance, "instance JSON")->required();
  validate->add_option("--class", val_class, "class JSON")->required();
  validate->add_option("--out", val_out, "directory for coverage.json and uncovered.csv");
  validate->add_option("--rank-tol", val_rank_tol, "relative rank tolerance");

  relex::RunOptions run;
  std::uint64_t run_seed = 0;
  bool run_seed_set = false;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute the runs described by a config");
  run_cmd->add_option("--config", run.config_path, "experiment config JSON")->required();
  run_cmd->add_option("--out", run.out_dir_override, "override the config output directory");
  run_cmd->add_option("--jobs", run.jobs, "max concurrent runs");
  run_cmd->add_option("--seed", run_seed, "run only this seed")->each([&](const std::string&) {
    run_seed_set = true;
  });
  run_cmd->add_option("--resume", run.resume_path, "checkpoint JSON to resume from");

  relex::ReportOptions report;
  CLI::App* report_cmd = app.add_subcommand("report", "Plot cumulative regret across run dirs");
  report_cmd->add_option("dirs", report.run_dirs, "run directories")->required();
  report_cmd->add_option("--out", report.out_svg, "output SVG path");
  report_cmd->add_flag("--log-x", report.log_x, "logarithmic episode axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? relex::kExitOk : relex::kExitUsage;
  }

  if (generate->parsed()) return relex::cmd_generate(gen, std::cout, std::cerr);
  if (validate->parsed())
    return relex::cmd_validate(val_instance, val_class, val_out, val_rank_tol, std::cout, std::cerr);
  if (run_cmd->parsed()) {
    if (run_seed_set) run.seed_override = run_seed;
    return relex::cmd_run(run, std::cout, std::cerr);
  }
  if (report_cmd->parsed()) return relex::cmd_report(report, std::cout, std::cerr);
  return relex::kExitUsage;
}

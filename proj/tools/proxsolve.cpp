// Command-line front end: train a projection network, solve linear inverse
// problems with ADMM, benchmark priors, and run the verification suites.

#include <CLI11.hpp>
#include <iostream>

#include "prox/commands.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long seed_data = -1;
  long seed_operator = -1;
  long seed_training = -1;
  std::vector<std::string> overrides;  // section.key=value
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides io.out_dir)");
  cmd->add_option("--seed-data", args.seed_data, "override seeds.data");
  cmd->add_option("--seed-operator", args.seed_operator, "override seeds.operator");
  cmd->add_option("--seed-training", args.seed_training, "override seeds.training");
  cmd->add_option("--set", args.overrides, "extra section.key=value overrides")
      ->take_all();
}

prox::ExperimentConfig make_config(const CommonArgs& args) {
  prox::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = prox::parse_config_file(args.config_path);
  for (const std::string& entry : args.overrides) {
    auto dot = entry.find('.');
    auto eq = entry.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
      throw prox::ConfigError("--set expects section.key=value, got '" + entry + "'");
    prox::apply_config_entry(cfg, entry.substr(0, dot), entry.substr(dot + 1, eq - dot - 1),
                             entry.substr(eq + 1));
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed_data >= 0) cfg.data_seed = static_cast<std::uint64_t>(args.seed_data);
  if (args.seed_operator >= 0) cfg.operator_seed = static_cast<std::uint64_t>(args.seed_operator);
  if (args.seed_training >= 0) cfg.training_seed = static_cast<std::uint64_t>(args.seed_training);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADMM solver for linear inverse imaging problems with a learned projection prior"};
  app.require_subcommand(1);

  CommonArgs train_args, solve_args, bench_args;
  std::string check_kind = "all";
  std::string solve_input, solve_measurements;

  CLI::App* train = app.add_subcommand("train", "train the projection network");
  add_common(train, train_args, true);

  CLI::App* solve = app.add_subcommand("solve", "reconstruct one image");
  add_common(solve, solve_args, true);
  solve->add_option("--input", solve_input, "ground-truth image (PGM/PNG)");
  solve->add_option("--measurements", solve_measurements, "measurement file to load");

  CLI::App* bench = app.add_subcommand("bench", "benchmark priors over a dataset");
  add_common(bench, bench_args, true);

  CLI::App* check = app.add_subcommand("check", "run verification suites");
  check->add_option("kind", check_kind, "adjoint|gradient|wavelet|cg|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      prox::cmd_train(make_config(train_args));
    } else if (solve->parsed()) {
      prox::ExperimentConfig cfg = make_config(solve_args);
      if (!solve_input.empty()) cfg.input_path = solve_input;
      if (!solve_measurements.empty()) cfg.measurements_path = solve_measurements;
      prox::cmd_solve(cfg);
    } else if (bench->parsed()) {
      prox::cmd_bench(make_config(bench_args));
    } else if (check->parsed()) {
      if (!prox::cmd_check(check_kind)) return 2;
    }
  } catch (const prox::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

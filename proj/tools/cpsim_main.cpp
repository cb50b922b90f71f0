#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpsim/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cyber-physical grid/network simulation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  cpsim::cli::RunOverrides overrides;
  std::string method, out_dir;
  auto* run = app.add_subcommand("run", "run a scenario and write its artifacts");
  run->add_option("--config", config_path, "scenario config (JSON)")->required();
  run->add_option("--method", method, "self_consistent | cosim | both");
  run->add_option("--out", out_dir, "output directory");

  std::string bench_config, precisions_arg, bench_out;
  int reps = 3;
  auto* bench = app.add_subcommand("bench", "time both methods across precisions");
  bench->add_option("--config", bench_config, "scenario config (JSON)")->required();
  bench->add_option("--precisions", precisions_arg, "comma-separated time precisions in ms")
      ->required();
  bench->add_option("--reps", reps, "repetitions per cell");
  bench->add_option("--out", bench_out, "benchmark CSV path");

  std::string rep_a, rep_b;
  double tol_ms = 0.02;
  auto* cmp = app.add_subcommand("compare", "diff two run reports' arrival times");
  cmp->add_option("a", rep_a, "first report.json")->required();
  cmp->add_option("b", rep_b, "second report.json")->required();
  cmp->add_option("--tol-ms", tol_ms, "tolerance in milliseconds");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    if (!method.empty()) overrides.method = method;
    if (!out_dir.empty()) overrides.out_dir = out_dir;
    return cpsim::cli::run_command(config_path, overrides);
  }
  if (bench->parsed()) {
    std::vector<double> precisions;
    std::stringstream ss(precisions_arg);
    std::string item;
    while (std::getline(ss, item, ',')) precisions.push_back(std::stod(item));
    return cpsim::cli::bench_command(bench_config, precisions, reps, bench_out);
  }
  if (cmp->parsed()) return cpsim::cli::compare_command(rep_a, rep_b, tol_ms);
  return 0;
}

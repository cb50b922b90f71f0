#include "cpsim/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "cpsim/cli/scenario_config.hpp"
#include "cpsim/orch/cosim.hpp"
#include "cpsim/orch/self_consistent.hpp"

namespace cpsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_self_consistent_artifacts(const fs::path& dir, const Scenario& scenario,
                                     orch::SelfConsistentResult& res) {
  fs::create_directories(dir);
  write_file(dir / "report.json", res.report.to_json().dump(2) + "\n");
  json timings(res.phase_wall_ms);
  write_file(dir / "timings.json", timings.dump(2) + "\n");
  write_file(dir / "trajectory.csv", res.trajectory.to_csv());
  auto& net = *res.final_net;
  auto name = [&](int id) { return net.network().host(id).name; };
  write_file(dir / "delay_trace.csv", net.network().trace().to_csv(name));
  write_file(dir / "app_events.csv", net.stack().app_events_csv());
  write_file(dir / "monitoring_delays.csv", net.stack().monitoring_csv());
  write_file(dir / "topology.csv", net.network().topology().to_csv());
  for (std::size_t i = 0; i < res.models.size(); ++i)
    write_file(dir / ("delay_model_iter" + std::to_string(i) + ".csv"), res.models[i].to_csv());
  (void)scenario;
}

void write_cosim_artifacts(const fs::path& dir, orch::CosimResult& res) {
  fs::create_directories(dir);
  write_file(dir / "report.json", res.report.to_json().dump(2) + "\n");
  json timings(res.phase_wall_ms);
  write_file(dir / "timings.json", timings.dump(2) + "\n");
  write_file(dir / "trajectory.csv", res.trajectory.to_csv());
  write_file(dir / "delay_trace.csv", res.delay_trace_csv);
  write_file(dir / "app_events.csv", res.app_events_csv);
  write_file(dir / "monitoring_delays.csv", res.monitoring_csv);
}

}  // namespace

int run_command(const std::string& config_path, const RunOverrides& overrides) {
  Scenario scenario;
  try {
    scenario = parse_scenario_file(config_path);
    if (overrides.method) {
      if (*overrides.method != "self_consistent" && *overrides.method != "cosim" &&
          *overrides.method != "both")
        throw ConfigError("method", "must be self_consistent, cosim or both");
      scenario.method = *overrides.method;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const grid::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  fs::path out_dir = overrides.out_dir.value_or("out/" + scenario.name);
  bool want_sc = scenario.method == "self_consistent" || scenario.method == "both";
  bool want_cs = scenario.method == "cosim" || scenario.method == "both";

  std::optional<orch::RunReport> sc_report, cs_report;
  try {
    if (want_sc) {
      auto res = orch::self_consistent_simulate(scenario, scenario.epsilon_ms,
                                                scenario.max_iterations);
      write_self_consistent_artifacts(out_dir / "self_consistent", scenario, res);
      sc_report = res.report;
      std::cout << "self_consistent: converged in " << res.convergence.iterations
                << " iteration(s)";
      for (double n : res.convergence.norms_ms) std::cout << " norm=" << n << "ms";
      std::cout << "\n";
    }
    if (want_cs) {
      auto res = orch::cosim_simulate(
          scenario, SimTime::from_seconds(scenario.min_net_sync_ms * 1e-3));
      write_cosim_artifacts(out_dir / "cosim", res);
      cs_report = res.report;
      std::cout << "cosim: " << res.report.sync_steps << " sync steps\n";
    }
    if (sc_report && cs_report) {
      auto diff = orch::compare_reports(*sc_report, *cs_report, 0.02);
      write_file(out_dir / "agreement.json", diff.to_json().dump(2) + "\n");
      std::cout << "agreement: max arrival delta " << diff.max_delta_ms << " ms\n";
    }
  } catch (const orch::NotConverged& e) {
    std::cerr << "not converged:";
    for (double n : e.norms_ms) std::cerr << " " << n << "ms";
    std::cerr << "\n";
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return kExitSimFault;
  }
  std::cout << "artifacts written to " << out_dir.string() << "\n";
  return kExitOk;
}

int bench_command(const std::string& config_path, const std::vector<double>& precisions_ms,
                  int repetitions, const std::string& out_csv) {
  Scenario scenario;
  try {
    scenario = parse_scenario_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (repetitions < 1) {
    std::cerr << "config error: repetitions must be at least 1\n";
    return kExitConfig;
  }
  if (repetitions == 1)
    std::cerr << "warning: single repetition, medians are low-confidence\n";

  struct Row {
    std::string method;
    double precision_ms;
    double wall_s;
    std::uint64_t steps;  // iterations (self-consistent) or sync steps (cosim)
  };
  std::vector<Row> rows;

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };

  try {
    for (double prec : precisions_ms) {
      {
        std::vector<double> walls;
        std::uint64_t iters = 0;
        for (int r = 0; r < repetitions; ++r) {
          auto t0 = std::chrono::steady_clock::now();
          auto res = orch::self_consistent_simulate(scenario, prec, scenario.max_iterations);
          walls.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count());
          iters = static_cast<std::uint64_t>(res.convergence.iterations);
        }
        rows.push_back(Row{"self_consistent", prec, median(walls), iters});
      }
      {
        std::vector<double> walls;
        std::uint64_t syncs = 0;
        for (int r = 0; r < repetitions; ++r) {
          auto t0 = std::chrono::steady_clock::now();
          auto res = orch::cosim_simulate(scenario, SimTime::from_seconds(prec * 1e-3));
          walls.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count());
          syncs = res.report.sync_steps;
        }
        rows.push_back(Row{"cosim", prec, median(walls), syncs});
      }
    }
  } catch (const orch::NotConverged&) {
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return kExitSimFault;
  }

  std::ostringstream csv;
  csv << "method,time_precision_ms,wall_clock_s,iterations_or_sync_steps\n";
  for (const auto& r : rows)
    csv << r.method << ',' << r.precision_ms << ',' << r.wall_s << ',' << r.steps << '\n';
  if (!out_csv.empty()) {
    fs::create_directories(fs::path(out_csv).parent_path());
    write_file(out_csv, csv.str());
  }
  std::cout << csv.str();
  return kExitOk;
}

int compare_command(const std::string& report_a, const std::string& report_b,
                    double tolerance_ms) {
  try {
    auto load = [](const std::string& p) {
      std::ifstream in(p);
      if (!in) throw std::runtime_error("cannot open " + p);
      json j;
      in >> j;
      return orch::RunReport::from_json(j);
    };
    auto a = load(report_a);
    auto b = load(report_b);
    auto diff = orch::compare_reports(a, b, tolerance_ms);
    std::cout << diff.to_json().dump(2) << "\n";
    return diff.pass ? kExitOk : kExitSimFault;
  } catch (const orch::ScenarioMismatch& e) {
    std::cerr << "scenario mismatch: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "compare failed: " << e.what() << "\n";
    return kExitSimFault;
  }
}

}  // namespace cpsim::cli

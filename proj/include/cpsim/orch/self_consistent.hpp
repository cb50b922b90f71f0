#pragma once

#include <memory>

#include "cpsim/grid/dynamics.hpp"
#include "cpsim/orch/delay_model.hpp"
#include "cpsim/orch/report.hpp"
#include "cpsim/orch/runs.hpp"
#include "cpsim/scenario.hpp"

namespace cpsim::orch {

struct NotConverged : std::runtime_error {
  NotConverged(std::vector<double> norms, int iters)
      : std::runtime_error("self-consistent iteration did not converge after " +
                           std::to_string(iters) + " iterations"),
        norms_ms(std::move(norms)) {}
  std::vector<double> norms_ms;
};

struct PowerRunResult {
  grid::Trajectory trajectory;
  AdditionalTraffic additional;
  std::vector<TriggerRecord> triggers;
  double min_avg_freq_hz = 1e9;
  std::optional<SimTime> avg_freq_below_49_at;
};

/// Grid run with the communication chain emulated from the delay model: the
/// SPDC decision per timestamp lands after the modeled aggregation latency,
/// and each load's reduction lands after the modeled per-path delay.
PowerRunResult power_run(const grid::PowerModel& model, const DelayModel& delays,
                         const Scenario& scenario);

struct SelfConsistentResult {
  RunReport report;
  ConvergenceReport convergence;
  grid::Trajectory trajectory;
  std::vector<DelayModel> models;  // pdf_0 .. pdf_n
  std::unique_ptr<NetworkRun> final_net;
  std::map<std::string, double> phase_wall_ms;
};

/// Alternates grid and network runs, exchanging delay models, until two
/// successive models differ by at most epsilon_ms under the convergence norm.
SelfConsistentResult self_consistent_simulate(const Scenario& scenario, double epsilon_ms,
                                              int max_iterations);

}  // namespace cpsim::orch

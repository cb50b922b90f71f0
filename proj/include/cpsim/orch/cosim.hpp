#pragma once

#include <string>

#include "cpsim/grid/dynamics.hpp"
#include "cpsim/orch/report.hpp"
#include "cpsim/scenario.hpp"

namespace cpsim::orch {

struct CosimResult {
  RunReport report;
  grid::Trajectory trajectory;
  std::string delay_trace_csv;
  std::string app_events_csv;
  std::string monitoring_csv;
  std::map<std::string, double> phase_wall_ms;
};

/// Event-based co-simulation of the grid and network simulators running as
/// two OS processes in lockstep.
///
/// The grid federate (parent) publishes PMU samples at the reporting ticks
/// with no restriction; the network federate (forked child) may only open a
/// synchronisation point at least min_net_sync after the previous one, so
/// deliveries between allowed points reach the grid at the next point, never
/// early. With min_net_sync = 0 the grid perceives deliveries exactly.
CosimResult cosim_simulate(const Scenario& scenario, SimTime min_net_sync);

}  // namespace cpsim::orch

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpsim/grid/model.hpp"
#include "cpsim/net/topology.hpp"
#include "cpsim/time.hpp"

namespace cpsim {

struct GeneratorTripSpec {
  int gen_id = 0;
  SimTime at;
};

struct LinkFailureSpec {
  int bus_a = 0;
  int bus_b = 0;
  SimTime at;
};

/// Fully resolved scenario: grid case, communication plane, application
/// parameters and the event script. Produced by the CLI config parser or
/// built directly in tests.
struct Scenario {
  std::string name;
  std::string grid_case_path;
  grid::CaseSpec grid_case;
  net::NetParams net_params;

  std::vector<int> pdc_buses{2, 6, 21, 27};
  int spdc_bus = 16;
  std::map<int, int> pmu_zones;  // bus -> pdc bus; empty = nearest by routing metric

  int report_rate_hz = 30;
  SimTime max_wait = SimTime::ms(100);

  bool control_enabled = false;
  std::vector<double> thresholds_hz;
  double reduction_fraction = 0.02;

  std::optional<GeneratorTripSpec> trip;
  std::vector<LinkFailureSpec> link_failures;

  SimTime t_end = SimTime::sec(5);
  SimTime probe_timestamp = SimTime::ms(500);

  std::string method = "both";  // self_consistent | cosim | both
  double epsilon_ms = 1.0;
  double min_net_sync_ms = 1.0;
  int max_iterations = 10;
  std::uint64_t seed = 0;  // reserved for stochastic delay models

  /// Load buses (nonzero demand), ascending.
  std::vector<int> load_buses() const {
    std::vector<int> out;
    for (const auto& b : grid_case.buses)
      if (b.p_load_mw != 0.0 || b.q_load_mvar != 0.0) out.push_back(b.id);
    return out;
  }

  /// PMU tick instants in [0, t_end).
  std::vector<SimTime> ticks() const {
    std::vector<SimTime> out;
    for (std::int64_t k = 0;; ++k) {
      SimTime t = report_tick(k, report_rate_hz);
      if (t >= t_end) break;
      out.push_back(t);
    }
    return out;
  }
};

}  // namespace cpsim

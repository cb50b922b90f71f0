#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpsim/time.hpp"

namespace cpsim::orch {

struct TriggerRecord {
  SimTime tau;
  int threshold_index = 0;
  SimTime decision;
};

struct ArrivalRecord {
  int load_bus = 0;
  SimTime trigger;
  int threshold_index = 0;
  SimTime exact;               // network-exact delivery time
  std::optional<SimTime> perceived;  // grid-perceived (co-simulation only)
};

struct ConvergenceReport {
  double epsilon_ms = 0.0;
  std::vector<double> norms_ms;
  int iterations = 0;
  bool converged = false;
};

/// Summary of one scenario run under either method. Wall-clock timings are
/// kept out of this structure's JSON so run artifacts stay byte-reproducible;
/// they are written to a separate timings file.
struct RunReport {
  std::string scenario;
  std::string method;
  std::map<int, int> zones;
  std::vector<TriggerRecord> triggers;
  std::vector<ArrivalRecord> arrivals;
  ConvergenceReport convergence;
  double min_avg_freq_hz = 0.0;
  std::optional<SimTime> avg_freq_below_49_at;
  std::uint64_t sync_steps = 0;
  std::uint64_t events_fired = 0;
  std::uint64_t late_measurements = 0;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

struct ScenarioMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompareResult {
  double max_delta_ms = 0.0;
  // (load, batch threshold index) -> delta ms between exact arrival times
  std::vector<std::tuple<int, int, double>> deltas;
  bool pass = false;
  nlohmann::json to_json() const;
};

/// Per-load arrival-time comparison between two reports of the same scenario.
CompareResult compare_reports(const RunReport& a, const RunReport& b, double tolerance_ms);

}  // namespace cpsim::orch

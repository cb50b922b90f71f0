#pragma once

#include <memory>
#include <vector>

#include "cpsim/app/stack.hpp"
#include "cpsim/net/network.hpp"
#include "cpsim/orch/delay_model.hpp"
#include "cpsim/scenario.hpp"

namespace cpsim::orch {

struct ProbeDropped : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UncoveredPath : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Traffic whose existence depends on the grid trajectory: the SPDC's
/// load-reduction batches, keyed by the trigger timestamps that caused them.
struct AdditionalTraffic {
  struct Entry {
    SimTime send_time;  // estimated SPDC decision time
    std::string src;
    std::string dst;
    net::PacketKind kind = net::PacketKind::ControlCommand;
    std::int64_t size_bytes = 500;
    int threshold_index = 0;
    SimTime trigger;    // measurement timestamp of the triggering decision
  };
  std::vector<Entry> entries;

  std::vector<app::ForcedTrigger> batches() const;
};

/// One standalone network run: topology + routing + application stack over a
/// private event queue. Construction order is fixed so that identical inputs
/// give bit-identical event sequences.
class NetworkRun {
 public:
  NetworkRun(const Scenario& scenario, app::ValueMode value_mode, app::TriggerMode trigger_mode,
             std::vector<app::ForcedTrigger> forced = {});

  void run_until(SimTime t_end);

  EventQueue& queue() { return *queue_; }
  net::Network& network() { return *network_; }
  app::Stack& stack() { return *stack_; }
  const std::map<int, int>& zones() const { return zones_; }

  /// Delay model extracted from this run: SPDC aggregation latencies per
  /// timestamp (optionally truncated) and per-load command delays keyed by
  /// trigger timestamp.
  DelayModel extract_model(int iteration, std::optional<SimTime> decision_cutoff = {}) const;

  std::string spdc_name() const;

 private:
  std::unique_ptr<EventQueue> queue_;
  std::unique_ptr<net::Network> network_;
  std::unique_ptr<app::Stack> stack_;
  std::map<int, int> zones_;
  const Scenario& scenario_;
};

/// Nearest-PDC assignment under the routing metric; ties prefer the smaller
/// PDC bus id. Used when the scenario does not pin zones explicitly.
std::map<int, int> auto_zones(const net::Topology& topo, const std::vector<int>& pdc_buses);

net::Topology build_topology(const Scenario& scenario);

/// Steady-monitoring run with one injected command batch at the probe
/// timestamp; yields the initial delay model.
DelayModel probe_pdf0(const Scenario& scenario, std::unique_ptr<NetworkRun>* run_out = nullptr);

/// Monitoring plus the logged additional traffic; yields the next model.
DelayModel network_rerun(const Scenario& scenario, const AdditionalTraffic& additional,
                         int iteration, std::unique_ptr<NetworkRun>* run_out = nullptr);

}  // namespace cpsim::orch

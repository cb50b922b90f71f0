#include "cpsim/orch/runs.hpp"

#include <algorithm>
#include <set>

namespace cpsim::orch {

std::vector<app::ForcedTrigger> AdditionalTraffic::batches() const {
  std::set<std::pair<std::int64_t, int>> seen;
  for (const auto& e : entries) seen.insert({e.trigger.ticks(), e.threshold_index});
  std::vector<app::ForcedTrigger> out;
  for (const auto& [t, idx] : seen) out.push_back(app::ForcedTrigger{SimTime::ns(t), idx});
  return out;
}

net::Topology build_topology(const Scenario& scenario) {
  std::vector<net::BranchReactance> branches;
  branches.reserve(scenario.grid_case.branches.size());
  for (const auto& br : scenario.grid_case.branches)
    branches.push_back(
        net::BranchReactance{br.from, br.to, scenario.grid_case.branch_x_ohm(br)});
  return net::Topology(scenario.grid_case.bus_count(), branches, scenario.net_params);
}

std::map<int, int> auto_zones(const net::Topology& topo, const std::vector<int>& pdc_buses) {
  net::RoutingTable routes = net::compute_routes(topo);
  std::map<int, int> zones;
  std::vector<int> pdcs = pdc_buses;
  std::sort(pdcs.begin(), pdcs.end());
  for (int bus = 1; bus <= topo.bus_count(); ++bus) {
    int best = -1;
    std::int64_t best_cost = -1;
    for (int pdc : pdcs) {
      std::int64_t c = (bus == pdc) ? 0 : routes.cost_ns(bus, pdc);
      if (c < 0) continue;
      if (best < 0 || c < best_cost) {
        best = pdc;
        best_cost = c;
      }
    }
    if (best < 0) throw net::DisconnectedGraph("bus " + std::to_string(bus) + " reaches no PDC");
    zones[bus] = best;
  }
  return zones;
}

NetworkRun::NetworkRun(const Scenario& scenario, app::ValueMode value_mode,
                       app::TriggerMode trigger_mode, std::vector<app::ForcedTrigger> forced)
    : scenario_(scenario) {
  net::Topology topo = build_topology(scenario);
  if (!scenario.pmu_zones.empty()) zones_ = scenario.pmu_zones;
  else if (!scenario.pdc_buses.empty()) zones_ = auto_zones(topo, scenario.pdc_buses);

  queue_ = std::make_unique<EventQueue>();
  network_ = std::make_unique<net::Network>(std::move(topo), *queue_);

  app::StackParams params;
  params.report_rate_hz = scenario.report_rate_hz;
  params.max_wait = scenario.max_wait;
  params.thresholds_hz = scenario.thresholds_hz;
  params.reduction_fraction = scenario.reduction_fraction;
  params.pdc_buses = scenario.pdc_buses;
  params.spdc_bus = scenario.spdc_bus;
  params.pmu_to_pdc = zones_;
  params.load_buses = scenario.load_buses();
  stack_ = std::make_unique<app::Stack>(*network_, params, value_mode, trigger_mode);
  if (!forced.empty()) stack_->set_forced_triggers(std::move(forced));

  // Failures are scheduled before the PMU ticks so that a failure coinciding
  // with a tick takes effect first, identically in every run mode.
  for (const auto& lf : scenario.link_failures) {
    int a = lf.bus_a, b = lf.bus_b;
    queue_->schedule(lf.at, "net.fail_link",
                     [this, a, b](SimTime t) { network_->fail_link(a, b, t); });
  }
  stack_->start(scenario.t_end);
}

void NetworkRun::run_until(SimTime t_end) { queue_->run_until(t_end); }

std::string NetworkRun::spdc_name() const {
  return "spdc" + std::to_string(scenario_.spdc_bus);
}

DelayModel NetworkRun::extract_model(int iteration, std::optional<SimTime> decision_cutoff) const {
  DelayModel model;
  model.iteration = iteration;
  for (const auto& d : stack_->spdc_decisions()) {
    if (decision_cutoff && d.tau > *decision_cutoff) continue;
    model.set_decision_latency(d.tau, d.t - d.tau);
  }
  // Command entries are relative to the emitting decision; the measurement
  // chain up to the decision lives in the decision-latency series.
  std::map<std::pair<std::int64_t, int>, SimTime> decision_at;
  for (const auto& b : stack_->emitted_batches())
    decision_at[{b.tau.ticks(), b.threshold_index}] = b.decision_time;
  for (const auto& arr : stack_->command_arrivals()) {
    PathKey path{spdc_name(), "load" + std::to_string(arr.load_bus)};
    SimTime dec = decision_at.at({arr.trigger_tau.ticks(), arr.threshold_index});
    model.set_entry(path, arr.trigger_tau, arr.t - dec);
  }
  return model;
}

DelayModel probe_pdf0(const Scenario& scenario, std::unique_ptr<NetworkRun>* run_out) {
  std::vector<app::ForcedTrigger> forced;
  SimTime t_end = scenario.t_end;
  if (scenario.control_enabled) {
    forced.push_back(app::ForcedTrigger{scenario.probe_timestamp, 0});
    t_end = std::min(scenario.t_end, scenario.probe_timestamp + SimTime::ms(500));
  }
  auto run = std::make_unique<NetworkRun>(scenario, app::ValueMode::Placeholder,
                                          app::TriggerMode::Forced, forced);
  run->run_until(t_end);

  if (scenario.control_enabled) {
    std::set<int> arrived;
    for (const auto& a : run->stack().command_arrivals()) arrived.insert(a.load_bus);
    for (int load : scenario.load_buses())
      if (!arrived.count(load))
        throw ProbeDropped("probe command never reached load " + std::to_string(load));
  }
  // The decision-latency series is cut at the probe timestamp so the model
  // carries only latencies unperturbed by the injected batch.
  std::optional<SimTime> cutoff;
  if (scenario.control_enabled) cutoff = scenario.probe_timestamp;
  DelayModel model = run->extract_model(0, cutoff);
  if (run_out) *run_out = std::move(run);
  return model;
}

DelayModel network_rerun(const Scenario& scenario, const AdditionalTraffic& additional,
                         int iteration, std::unique_ptr<NetworkRun>* run_out) {
  auto run = std::make_unique<NetworkRun>(scenario, app::ValueMode::Placeholder,
                                          app::TriggerMode::Forced, additional.batches());
  run->run_until(scenario.t_end);
  DelayModel model = run->extract_model(iteration);
  if (run_out) *run_out = std::move(run);
  return model;
}

}  // namespace cpsim::orch

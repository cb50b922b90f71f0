#include "cpsim/orch/self_consistent.hpp"

#include <chrono>

namespace cpsim::orch {

namespace {

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PowerRunResult power_run(const grid::PowerModel& model, const DelayModel& delays,
                         const Scenario& scenario) {
  grid::GridSimulation sim(model);
  if (scenario.trip) {
    grid::GridEvent ev;
    ev.at = scenario.trip->at;
    ev.kind = grid::GridEvent::Kind::GeneratorTrip;
    ev.gen_id = scenario.trip->gen_id;
    sim.add_event(ev);
  }

  PowerRunResult res;
  const std::string spdc = "spdc" + std::to_string(scenario.spdc_bus);
  const auto loads = scenario.load_buses();
  int next_thr = 0;

  sim.set_sample_times(
      scenario.ticks(), [&](SimTime tau, const std::vector<grid::BusSample>& buses) {
        double avg = 0.0;
        for (const auto& b : buses) avg += b.freq_hz;
        avg /= static_cast<double>(buses.size());
        res.min_avg_freq_hz = std::min(res.min_avg_freq_hz, avg);
        if (!res.avg_freq_below_49_at && avg < 49.0) res.avg_freq_below_49_at = tau;
        if (!scenario.control_enabled) return;
        while (next_thr < static_cast<int>(scenario.thresholds_hz.size()) &&
               avg < scenario.thresholds_hz[next_thr]) {
          SimTime t_dec = tau + delays.decision_latency(tau);
          res.triggers.push_back(TriggerRecord{tau, next_thr, t_dec});
          for (int load : loads) {
            PathKey path{spdc, "load" + std::to_string(load)};
            SimTime t_arr;
            try {
              t_arr = t_dec + delays.delay(path, tau);
            } catch (const UnknownPath& e) {
              throw UncoveredPath(e.what());
            }
            grid::GridEvent ev;
            ev.at = t_arr;
            ev.kind = grid::GridEvent::Kind::LoadReduction;
            ev.load_bus = load;
            ev.fraction = scenario.reduction_fraction;
            ev.threshold_index = next_thr;
            sim.add_event(ev);
            res.additional.entries.push_back(AdditionalTraffic::Entry{
                t_dec, spdc, "load" + std::to_string(load), net::PacketKind::ControlCommand,
                scenario.net_params.packet_size_bytes, next_thr, tau});
          }
          ++next_thr;
        }
      });

  sim.advance_to(scenario.t_end);
  res.trajectory = sim.trajectory();
  return res;
}

SelfConsistentResult self_consistent_simulate(const Scenario& scenario, double epsilon_ms,
                                              int max_iterations) {
  SelfConsistentResult out;
  auto t_case = std::chrono::steady_clock::now();
  grid::PowerModel model = grid::load_case(scenario.grid_case);
  out.phase_wall_ms["load_case"] = wall_ms_since(t_case);

  auto t_probe = std::chrono::steady_clock::now();
  DelayModel current = probe_pdf0(scenario);
  out.phase_wall_ms["probe"] = wall_ms_since(t_probe);
  out.models.push_back(current);

  ConvergenceReport conv;
  conv.epsilon_ms = epsilon_ms;
  PowerRunResult final_power;
  bool have_final = false;

  for (int i = 1; i <= max_iterations; ++i) {
    auto t_power = std::chrono::steady_clock::now();
    PowerRunResult pr = power_run(model, current, scenario);
    out.phase_wall_ms["power_run_" + std::to_string(i)] = wall_ms_since(t_power);

    auto t_net = std::chrono::steady_clock::now();
    std::unique_ptr<NetworkRun> net;
    DelayModel next = network_rerun(scenario, pr.additional, i, &net);
    out.phase_wall_ms["network_rerun_" + std::to_string(i)] = wall_ms_since(t_net);

    double norm = convergence_norm_ms(current, next);
    conv.norms_ms.push_back(norm);
    conv.iterations = i;
    out.models.push_back(next);

    if (norm <= epsilon_ms) {
      conv.converged = true;
      out.final_net = std::move(net);
      final_power = std::move(pr);
      have_final = true;
      break;
    }
    current = std::move(next);
  }
  if (!have_final) throw NotConverged(conv.norms_ms, conv.iterations);

  out.convergence = conv;
  out.trajectory = std::move(final_power.trajectory);

  RunReport rep;
  rep.scenario = scenario.name;
  rep.method = "self_consistent";
  rep.zones = out.final_net->zones();
  rep.triggers = final_power.triggers;
  for (const auto& arr : out.final_net->stack().command_arrivals()) {
    ArrivalRecord rec;
    rec.load_bus = arr.load_bus;
    rec.trigger = arr.trigger_tau;
    rec.threshold_index = arr.threshold_index;
    rec.exact = arr.t;
    rep.arrivals.push_back(rec);
  }
  rep.convergence = conv;
  rep.min_avg_freq_hz = final_power.min_avg_freq_hz;
  rep.avg_freq_below_49_at = final_power.avg_freq_below_49_at;
  rep.events_fired = out.final_net->queue().stats().events_fired;
  rep.late_measurements = out.final_net->stack().pdc_late_count();
  out.report = std::move(rep);
  return out;
}

}  // namespace cpsim::orch

#include "cpsim/orch/report.hpp"

#include <algorithm>
#include <cmath>

namespace cpsim::orch {

using nlohmann::json;

json RunReport::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["method"] = method;
  json z = json::object();
  for (const auto& [bus, pdc] : zones) z[std::to_string(bus)] = pdc;
  j["pmu_zones"] = z;
  j["triggers"] = json::array();
  for (const auto& t : triggers)
    j["triggers"].push_back({{"trigger_ns", t.tau.ticks()},
                             {"threshold_index", t.threshold_index},
                             {"decision_ns", t.decision.ticks()}});
  j["arrivals"] = json::array();
  for (const auto& a : arrivals) {
    json e = {{"load_bus", a.load_bus},
              {"trigger_ns", a.trigger.ticks()},
              {"threshold_index", a.threshold_index},
              {"exact_ns", a.exact.ticks()}};
    if (a.perceived) e["perceived_ns"] = a.perceived->ticks();
    j["arrivals"].push_back(e);
  }
  j["convergence"] = {{"epsilon_ms", convergence.epsilon_ms},
                      {"norms_ms", convergence.norms_ms},
                      {"iterations", convergence.iterations},
                      {"converged", convergence.converged}};
  j["min_avg_freq_hz"] = min_avg_freq_hz;
  if (avg_freq_below_49_at) j["avg_freq_below_49_ns"] = avg_freq_below_49_at->ticks();
  j["sync_steps"] = sync_steps;
  j["events_fired"] = events_fired;
  j["late_measurements"] = late_measurements;
  return j;
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.method = j.at("method").get<std::string>();
  for (auto it = j.at("pmu_zones").begin(); it != j.at("pmu_zones").end(); ++it)
    r.zones[std::stoi(it.key())] = it.value().get<int>();
  for (const auto& t : j.at("triggers"))
    r.triggers.push_back(TriggerRecord{SimTime::ns(t.at("trigger_ns").get<std::int64_t>()),
                                       t.at("threshold_index").get<int>(),
                                       SimTime::ns(t.at("decision_ns").get<std::int64_t>())});
  for (const auto& a : j.at("arrivals")) {
    ArrivalRecord rec;
    rec.load_bus = a.at("load_bus").get<int>();
    rec.trigger = SimTime::ns(a.at("trigger_ns").get<std::int64_t>());
    rec.threshold_index = a.at("threshold_index").get<int>();
    rec.exact = SimTime::ns(a.at("exact_ns").get<std::int64_t>());
    if (a.contains("perceived_ns"))
      rec.perceived = SimTime::ns(a.at("perceived_ns").get<std::int64_t>());
    r.arrivals.push_back(rec);
  }
  const auto& c = j.at("convergence");
  r.convergence.epsilon_ms = c.at("epsilon_ms").get<double>();
  r.convergence.norms_ms = c.at("norms_ms").get<std::vector<double>>();
  r.convergence.iterations = c.at("iterations").get<int>();
  r.convergence.converged = c.at("converged").get<bool>();
  r.min_avg_freq_hz = j.at("min_avg_freq_hz").get<double>();
  if (j.contains("avg_freq_below_49_ns"))
    r.avg_freq_below_49_at = SimTime::ns(j.at("avg_freq_below_49_ns").get<std::int64_t>());
  r.sync_steps = j.at("sync_steps").get<std::uint64_t>();
  r.events_fired = j.at("events_fired").get<std::uint64_t>();
  r.late_measurements = j.at("late_measurements").get<std::uint64_t>();
  return r;
}

CompareResult compare_reports(const RunReport& a, const RunReport& b, double tolerance_ms) {
  if (a.scenario != b.scenario)
    throw ScenarioMismatch("reports cover different scenarios: " + a.scenario + " vs " +
                           b.scenario);
  auto key = [](const ArrivalRecord& r) { return std::make_pair(r.load_bus, r.threshold_index); };
  std::map<std::pair<int, int>, SimTime> bx;
  for (const auto& r : b.arrivals) bx[key(r)] = r.exact;
  CompareResult out;
  for (const auto& r : a.arrivals) {
    auto it = bx.find(key(r));
    if (it == bx.end())
      throw ScenarioMismatch("arrival for load " + std::to_string(r.load_bus) + " batch " +
                             std::to_string(r.threshold_index) + " missing from second report");
    double delta = std::abs((r.exact - it->second).millis());
    out.deltas.emplace_back(r.load_bus, r.threshold_index, delta);
    out.max_delta_ms = std::max(out.max_delta_ms, delta);
  }
  if (a.arrivals.size() != b.arrivals.size())
    throw ScenarioMismatch("reports carry different arrival counts");
  out.pass = out.max_delta_ms <= tolerance_ms;
  return out;
}

json CompareResult::to_json() const {
  json j;
  j["max_delta_ms"] = max_delta_ms;
  j["pass"] = pass;
  j["deltas"] = json::array();
  for (const auto& [load, batch, delta] : deltas)
    j["deltas"].push_back({{"load_bus", load}, {"threshold_index", batch}, {"delta_ms", delta}});
  return j;
}

}  // namespace cpsim::orch

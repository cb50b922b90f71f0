#include "cpsim/cli/scenario_config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace cpsim::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double require_pos(const json& j, const std::string& field) {
  if (!j.contains(field)) throw ConfigError(field, "missing");
  double v = j.at(field).get<double>();
  if (!(v > 0)) throw ConfigError(field, "must be strictly positive");
  return v;
}

}  // namespace

Scenario parse_scenario(const json& j, const std::string& base_dir) {
  Scenario s;
  try {
    s.name = j.at("name").get<std::string>();
  } catch (const json::exception&) {
    throw ConfigError("name", "missing or not a string");
  }

  if (!j.contains("grid_case")) throw ConfigError("grid_case", "missing");
  s.grid_case_path = j.at("grid_case").get<std::string>();
  fs::path case_path = s.grid_case_path;
  if (case_path.is_relative()) case_path = fs::path(base_dir) / case_path;
  s.grid_case = grid::CaseSpec::parse_file(case_path.string());
  const int n = s.grid_case.bus_count();

  const json& net = j.value("net", json::object());
  s.net_params.bandwidth_bps = static_cast<std::int64_t>(require_pos(net, "bandwidth_bps"));
  s.net_params.packet_size_bytes =
      static_cast<std::int64_t>(require_pos(net, "packet_size_bytes"));
  s.net_params.refractive_index = require_pos(net, "refractive_index");
  s.net_params.ohm_per_km = require_pos(net, "ohm_per_km");

  const json& hosts = j.value("hosts", json::object());
  if (!hosts.contains("pdc_buses")) throw ConfigError("hosts.pdc_buses", "missing");
  s.pdc_buses = hosts.at("pdc_buses").get<std::vector<int>>();
  if (s.pdc_buses.empty()) throw ConfigError("hosts.pdc_buses", "must not be empty");
  for (int b : s.pdc_buses)
    if (b < 1 || b > n) throw ConfigError("hosts.pdc_buses", "bus out of range");
  if (!hosts.contains("spdc_bus")) throw ConfigError("hosts.spdc_bus", "missing");
  s.spdc_bus = hosts.at("spdc_bus").get<int>();
  if (s.spdc_bus < 1 || s.spdc_bus > n) throw ConfigError("hosts.spdc_bus", "bus out of range");
  s.pmu_zones.clear();
  if (hosts.contains("pmu_zones")) {
    std::set<int> pdcs(s.pdc_buses.begin(), s.pdc_buses.end());
    for (auto it = hosts.at("pmu_zones").begin(); it != hosts.at("pmu_zones").end(); ++it) {
      int pdc = std::stoi(it.key());
      if (!pdcs.count(pdc)) throw ConfigError("hosts.pmu_zones", "zone key is not a PDC bus");
      for (int bus : it.value().get<std::vector<int>>()) {
        if (bus < 1 || bus > n) throw ConfigError("hosts.pmu_zones", "bus out of range");
        if (!s.pmu_zones.emplace(bus, pdc).second)
          throw ConfigError("hosts.pmu_zones", "bus " + std::to_string(bus) + " assigned twice");
      }
    }
    if (static_cast<int>(s.pmu_zones.size()) != n)
      throw ConfigError("hosts.pmu_zones", "zones must cover every bus exactly once");
  }

  const json& pmu = j.value("pmu", json::object());
  s.report_rate_hz = static_cast<int>(require_pos(pmu, "report_rate_hz"));

  const json& agg = j.value("aggregation", json::object());
  s.max_wait = SimTime::from_seconds(require_pos(agg, "max_wait_ms") * 1e-3);

  const json& ctl = j.value("control", json::object());
  s.control_enabled = ctl.value("enabled", false);
  if (s.control_enabled) {
    if (!ctl.contains("thresholds_hz")) throw ConfigError("control.thresholds_hz", "missing");
    s.thresholds_hz = ctl.at("thresholds_hz").get<std::vector<double>>();
    if (s.thresholds_hz.empty()) throw ConfigError("control.thresholds_hz", "must not be empty");
    for (std::size_t i = 1; i < s.thresholds_hz.size(); ++i)
      if (!(s.thresholds_hz[i] < s.thresholds_hz[i - 1]))
        throw ConfigError("control.thresholds_hz", "must be strictly decreasing");
    s.reduction_fraction = require_pos(ctl, "reduction_fraction");
    if (s.reduction_fraction >= 1.0)
      throw ConfigError("control.reduction_fraction", "must be below 1");
  }

  const json& events = j.value("events", json::object());
  if (events.contains("generator_trip")) {
    const json& t = events.at("generator_trip");
    GeneratorTripSpec trip;
    trip.gen_id = t.at("gen_id").get<int>();
    trip.at = SimTime::from_seconds(t.at("t_s").get<double>());
    bool known = false;
    for (const auto& g : s.grid_case.gens) known = known || g.id == trip.gen_id;
    if (!known) throw ConfigError("events.generator_trip.gen_id", "unknown generator");
    s.trip = trip;
  }
  if (events.contains("link_failures")) {
    for (const auto& f : events.at("link_failures")) {
      LinkFailureSpec lf;
      lf.bus_a = f.at("bus_a").get<int>();
      lf.bus_b = f.at("bus_b").get<int>();
      lf.at = SimTime::from_seconds(f.at("t_s").get<double>());
      s.link_failures.push_back(lf);
    }
  }

  const json& run = j.value("run", json::object());
  s.t_end = SimTime::from_seconds(require_pos(run, "t_end_s"));
  if (s.trip && !(s.trip->at < s.t_end))
    throw ConfigError("run.t_end_s", "must exceed the generator trip time");
  for (const auto& lf : s.link_failures)
    if (!(lf.at < s.t_end)) throw ConfigError("run.t_end_s", "must exceed link failure times");
  s.method = run.value("method", std::string("both"));
  if (s.method != "self_consistent" && s.method != "cosim" && s.method != "both")
    throw ConfigError("run.method", "must be self_consistent, cosim or both");
  s.epsilon_ms = run.value("epsilon_ms", 1.0);
  if (!(s.epsilon_ms > 0)) throw ConfigError("run.epsilon_ms", "must be strictly positive");
  s.min_net_sync_ms = run.value("min_net_sync_ms", 1.0);
  if (s.min_net_sync_ms < 0) throw ConfigError("run.min_net_sync_ms", "must be non-negative");
  s.max_iterations = run.value("max_iterations", 10);
  if (s.max_iterations < 1) throw ConfigError("run.max_iterations", "must be at least 1");
  s.probe_timestamp = SimTime::from_seconds(run.value("probe_timestamp_s", 0.5));
  if (s.control_enabled && !(s.probe_timestamp < s.t_end))
    throw ConfigError("run.probe_timestamp_s", "must lie inside the run window");
  s.seed = run.value("seed", std::uint64_t{0});
  return s;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("(file)", std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(j, fs::path(path).parent_path().string());
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["grid_case"] = s.grid_case_path;
  j["net"] = {{"bandwidth_bps", s.net_params.bandwidth_bps},
              {"packet_size_bytes", s.net_params.packet_size_bytes},
              {"refractive_index", s.net_params.refractive_index},
              {"ohm_per_km", s.net_params.ohm_per_km}};
  json zones = json::object();
  for (int pdc : s.pdc_buses) {
    json members = json::array();
    for (const auto& [bus, p] : s.pmu_zones)
      if (p == pdc) members.push_back(bus);
    zones[std::to_string(pdc)] = members;
  }
  j["hosts"] = {{"pdc_buses", s.pdc_buses}, {"spdc_bus", s.spdc_bus}};
  if (!s.pmu_zones.empty()) j["hosts"]["pmu_zones"] = zones;
  j["pmu"] = {{"report_rate_hz", s.report_rate_hz}};
  j["aggregation"] = {{"max_wait_ms", s.max_wait.millis()}};
  j["control"] = {{"enabled", s.control_enabled}};
  if (s.control_enabled) {
    j["control"]["thresholds_hz"] = s.thresholds_hz;
    j["control"]["reduction_fraction"] = s.reduction_fraction;
  }
  j["events"] = json::object();
  if (s.trip)
    j["events"]["generator_trip"] = {{"gen_id", s.trip->gen_id}, {"t_s", s.trip->at.seconds()}};
  if (!s.link_failures.empty()) {
    j["events"]["link_failures"] = json::array();
    for (const auto& lf : s.link_failures)
      j["events"]["link_failures"].push_back(
          {{"bus_a", lf.bus_a}, {"bus_b", lf.bus_b}, {"t_s", lf.at.seconds()}});
  }
  j["run"] = {{"t_end_s", s.t_end.seconds()},
              {"method", s.method},
              {"epsilon_ms", s.epsilon_ms},
              {"min_net_sync_ms", s.min_net_sync_ms},
              {"max_iterations", s.max_iterations},
              {"probe_timestamp_s", s.probe_timestamp.seconds()},
              {"seed", s.seed}};
  return j;
}

}  // namespace cpsim::cli

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cpsim/cli/commands.hpp"
#include "cpsim/cli/scenario_config.hpp"
#include "cpsim/orch/report.hpp"

using namespace cpsim;
using namespace cpsim::cli;
namespace fs = std::filesystem;

namespace {

const std::string kRoot = std::string(CPSIM_SOURCE_DIR);

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("scenario configs round-trip field for field") {
  for (const char* name : {"c1_800kbps.json", "c2_1600kbps.json", "m1_monitoring.json"}) {
    Scenario s1 = parse_scenario_file(kRoot + "/scenarios/" + name);
    nlohmann::json j = scenario_to_json(s1);
    Scenario s2 = parse_scenario(j, kRoot + "/scenarios");
    CHECK(scenario_to_json(s2) == j);
    CHECK(s2.name == s1.name);
    CHECK(s2.pmu_zones == s1.pmu_zones);
    CHECK(s2.t_end == s1.t_end);
    CHECK(s2.thresholds_hz == s1.thresholds_hz);
  }
}

TEST_CASE("config validation names the offending field") {
  nlohmann::json j = load_json(kRoot + "/scenarios/c1_800kbps.json");

  SUBCASE("increasing thresholds") {
    j["control"]["thresholds_hz"] = {49.88, 49.92, 49.96};
    try {
      parse_scenario(j, kRoot + "/scenarios");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field_name == "control.thresholds_hz");
    }
  }
  SUBCASE("non-positive bandwidth") {
    j["net"]["bandwidth_bps"] = 0;
    CHECK_THROWS_AS(parse_scenario(j, kRoot + "/scenarios"), ConfigError);
  }
  SUBCASE("t_end before the trip") {
    j["run"]["t_end_s"] = 0.5;
    try {
      parse_scenario(j, kRoot + "/scenarios");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field_name == "run.t_end_s");
    }
  }
  SUBCASE("zones must cover every bus exactly once") {
    j["hosts"]["pmu_zones"]["2"].erase(0);
    CHECK_THROWS_AS(parse_scenario(j, kRoot + "/scenarios"), ConfigError);
  }
  SUBCASE("unknown method") {
    j["run"]["method"] = "fastest";
    CHECK_THROWS_AS(parse_scenario(j, kRoot + "/scenarios"), ConfigError);
  }
  SUBCASE("unknown trip target") {
    j["events"]["generator_trip"]["gen_id"] = 42;
    CHECK_THROWS_AS(parse_scenario(j, kRoot + "/scenarios"), ConfigError);
  }
}

TEST_CASE("run command: config errors exit 2, artifacts land on success") {
  fs::path tmp = fs::temp_directory_path() / "cpsim_test_cli";
  fs::remove_all(tmp);

  SUBCASE("missing config file") {
    RunOverrides ov;
    CHECK(run_command("/nonexistent.json", ov) == kExitConfig);
  }

  SUBCASE("self-consistent run emits the full artifact set") {
    // shortened C2 via an edited config copy
    nlohmann::json j = load_json(kRoot + "/scenarios/c2_1600kbps.json");
    j["grid_case"] = kRoot + "/data/ieee39.case";
    j["run"]["t_end_s"] = 1.6;
    fs::create_directories(tmp);
    std::ofstream(tmp / "cfg.json") << j.dump(2);
    RunOverrides ov;
    ov.method = "self_consistent";
    ov.out_dir = (tmp / "out").string();
    CHECK(run_command((tmp / "cfg.json").string(), ov) == kExitOk);
    for (const char* f :
         {"report.json", "timings.json", "trajectory.csv", "delay_trace.csv", "app_events.csv",
          "monitoring_delays.csv", "topology.csv", "delay_model_iter0.csv",
          "delay_model_iter1.csv"})
      CHECK(fs::exists(tmp / "out" / "self_consistent" / f));
  }
}

TEST_CASE("compare: identity passes, scenario mismatch is rejected") {
  orch::RunReport a;
  a.scenario = "x";
  a.method = "self_consistent";
  a.arrivals.push_back(orch::ArrivalRecord{8, SimTime::sec(1), 0, SimTime::ms(1100), {}});
  auto self_diff = orch::compare_reports(a, a, 0.02);
  CHECK(self_diff.pass);
  CHECK(self_diff.max_delta_ms == 0.0);

  orch::RunReport b = a;
  b.scenario = "y";
  CHECK_THROWS_AS(orch::compare_reports(a, b, 0.02), orch::ScenarioMismatch);

  orch::RunReport c = a;
  c.arrivals[0].exact = SimTime::ms(1100) + SimTime::us(30);
  auto diff = orch::compare_reports(a, c, 0.02);
  CHECK_FALSE(diff.pass);
  CHECK(diff.max_delta_ms == doctest::Approx(0.03));
}

TEST_CASE("report JSON round-trips through serialization") {
  orch::RunReport r;
  r.scenario = "c2_1600kbps";
  r.method = "cosim";
  r.zones = {{1, 2}, {2, 2}};
  r.triggers.push_back(orch::TriggerRecord{SimTime::from_seconds(1.1), 0, SimTime::ms(1126)});
  orch::ArrivalRecord arr;
  arr.load_bus = 8;
  arr.trigger = SimTime::from_seconds(1.1);
  arr.threshold_index = 0;
  arr.exact = SimTime::ms(1150);
  arr.perceived = SimTime::ms(1151);
  r.arrivals.push_back(arr);
  r.convergence.epsilon_ms = 1.0;
  r.convergence.norms_ms = {0.5};
  r.convergence.iterations = 1;
  r.convergence.converged = true;
  r.min_avg_freq_hz = 49.2;
  r.avg_freq_below_49_at = SimTime::from_seconds(3.4);
  r.sync_steps = 1234;
  r.events_fired = 99;

  auto j = r.to_json();
  orch::RunReport back = orch::RunReport::from_json(j);
  CHECK(back.to_json() == j);
}

TEST_CASE("bench emits one row per method and precision") {
  fs::path tmp = fs::temp_directory_path() / "cpsim_test_bench";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  nlohmann::json j = load_json(kRoot + "/scenarios/c2_1600kbps.json");
  j["grid_case"] = kRoot + "/data/ieee39.case";
  j["run"]["t_end_s"] = 1.6;
  std::ofstream(tmp / "cfg.json") << j.dump(2);

  CHECK(bench_command((tmp / "cfg.json").string(), {10.0, 1.0}, 1,
                      (tmp / "bench.csv").string()) == kExitOk);
  std::ifstream in(tmp / "bench.csv");
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);  // header + 2 methods x 2 precisions
  CHECK(rows[0] == "method,time_precision_ms,wall_clock_s,iterations_or_sync_steps");
  CHECK(rows[1].rfind("self_consistent,10,", 0) == 0);
  CHECK(rows[2].rfind("cosim,10,", 0) == 0);
  CHECK(rows[3].rfind("self_consistent,1,", 0) == 0);
  CHECK(rows[4].rfind("cosim,1,", 0) == 0);
}

TEST_CASE("both-methods run adds the cosim artifacts and the agreement diff") {
  fs::path tmp = fs::temp_directory_path() / "cpsim_test_both";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  nlohmann::json j = load_json(kRoot + "/scenarios/c2_1600kbps.json");
  j["grid_case"] = kRoot + "/data/ieee39.case";
  j["run"]["t_end_s"] = 1.6;
  std::ofstream(tmp / "cfg.json") << j.dump(2);

  RunOverrides ov;
  ov.out_dir = (tmp / "out").string();
  CHECK(run_command((tmp / "cfg.json").string(), ov) == kExitOk);
  for (const char* f : {"report.json", "delay_trace.csv", "monitoring_delays.csv"})
    CHECK(fs::exists(tmp / "out" / "cosim" / f));
  REQUIRE(fs::exists(tmp / "out" / "agreement.json"));
  auto diff = load_json((tmp / "out" / "agreement.json").string());
  CHECK(diff.at("pass").get<bool>());
}

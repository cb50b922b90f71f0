#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cpsim/scenario.hpp"

namespace cpsim::cli {

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& field, const std::string& why)
      : std::runtime_error("config field '" + field + "': " + why), field_name(field) {}
  std::string field_name;
};

/// Parses and validates a scenario config. Field names carry explicit units
/// (bandwidth_bps, max_wait_ms, t_end_s); conversion to the internal
/// nanosecond clock happens here, once.
Scenario parse_scenario(const nlohmann::json& j, const std::string& base_dir);
Scenario parse_scenario_file(const std::string& path);

/// Inverse of parse_scenario: re-parsing the result yields an identical
/// scenario, field for field.
nlohmann::json scenario_to_json(const Scenario& s);

}  // namespace cpsim::cli

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cpsim::cli {

// Exit codes: 0 ok, 2 config error, 3 not converged, 4 simulation fault.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kExitSimFault = 4;

struct RunOverrides {
  std::optional<std::string> method;
  std::optional<std::string> out_dir;
};

int run_command(const std::string& config_path, const RunOverrides& overrides);

int bench_command(const std::string& config_path, const std::vector<double>& precisions_ms,
                  int repetitions, const std::string& out_csv);

int compare_command(const std::string& report_a, const std::string& report_b,
                    double tolerance_ms);

}  // namespace cpsim::cli

#pragma once

#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cpsim::grid {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PowerFlowDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoEquilibrium : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownTarget : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AlreadyTripped : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrationDiverged : std::runtime_error {
  IntegrationDiverged(const std::string& what, double last_valid_s)
      : std::runtime_error(what), last_valid_time_s(last_valid_s) {}
  double last_valid_time_s;
};

struct BusSpec {
  int id = 0;
  double p_load_mw = 0.0;
  double q_load_mvar = 0.0;
};

struct BranchSpec {
  int from = 0;
  int to = 0;
  double r_pu = 0.0;
  double x_pu = 0.0;
  double b_pu = 0.0;
  double tap = 0.0;  // 0: plain line; >0: off-nominal turns ratio on the from side
};

struct GenSpec {
  int id = 0;
  int bus = 0;
  double p_mw = 0.0;
  double v_set_pu = 1.0;
  double inertia_s = 0.0;      // H on system base
  double xd_prime_pu = 0.0;
  double damping_pu = 0.0;     // D on system base
  double droop = 0.05;         // speed droop on the machine's dispatch base
  double tg_s = 5.0;           // governor time constant
  double pmax_pu = 1e9;        // governor output ceiling, system base
  bool slack = false;
};

/// Parsed grid case: buses, branches, machine and governor constants.
struct CaseSpec {
  double base_mva = 100.0;
  double base_kv = 345.0;
  double nominal_hz = 50.0;
  std::vector<BusSpec> buses;
  std::vector<BranchSpec> branches;
  std::vector<GenSpec> gens;

  static CaseSpec parse_file(const std::string& path);
  static CaseSpec parse(const std::string& text, const std::string& origin);

  int bus_count() const { return static_cast<int>(buses.size()); }
  double branch_x_ohm(const BranchSpec& br) const {
    return br.x_pu * base_kv * base_kv / base_mva;
  }
};

struct PowerFlowResult {
  Eigen::VectorXcd v;          // per-bus complex voltage, pu
  Eigen::VectorXd p_gen_mw;    // per-generator dispatch incl. solved slack
  Eigen::VectorXd q_gen_mvar;
  double max_mismatch_pu = 0.0;
  int iterations = 0;
};

/// 39-bus style power model: admittance matrix, constant-impedance loads
/// converted at the solved voltages, classical machines behind X'd.
struct PowerModel {
  CaseSpec spec;
  Eigen::MatrixXcd ybus;             // network only (lines, taps, charging)
  Eigen::VectorXcd y_load;           // per-bus load admittance at nominal scale
  PowerFlowResult pf;
  // machine constants mirrored into vectors (index = gen order in spec)
  Eigen::VectorXd emf_mag;           // |E'| behind X'd
  Eigen::VectorXd delta0;            // initial rotor angles
  Eigen::VectorXd pm0;               // initial mechanical power, pu
  double total_gen_mw = 0.0;

  int gen_count() const { return static_cast<int>(spec.gens.size()); }
};

Eigen::MatrixXcd build_ybus(const CaseSpec& spec);
PowerFlowResult solve_power_flow(const CaseSpec& spec, double tol_pu = 1e-10, int max_iter = 50);

/// Runs the power flow and prepares machine EMFs, Pm and load admittances.
PowerModel load_case(const CaseSpec& spec);
PowerModel load_case_file(const std::string& path);

}  // namespace cpsim::grid
